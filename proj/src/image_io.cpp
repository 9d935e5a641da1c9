#include "bcm/image_io.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "bcm/errors.hpp"

namespace bcm {
namespace {

const char* tuple_type(int depth) {
  switch (depth) {
    case 1: return "GRAYSCALE";
    case 2: return "GRAYSCALE_ALPHA";
    case 3: return "RGB";
    case 4: return "RGB_ALPHA";
    default: return nullptr;
  }
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + file.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + file.string() + "'");
  return in;
}

void read_payload(std::istream& in, Raster& raster, const std::filesystem::path& file) {
  raster.samples.resize(static_cast<std::size_t>(raster.width) * raster.height * raster.depth);
  in.read(reinterpret_cast<char*>(raster.samples.data()), static_cast<std::streamsize>(raster.samples.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.samples.size())) {
    throw FormatError("'" + file.string() + "': truncated pixel data");
  }
}

// Next whitespace-delimited token of a PNM header, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string token;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

}  // namespace

Raster read_pam(const std::filesystem::path& file) {
  auto in = open_in(file);
  std::string line;
  if (!std::getline(in, line) || line != "P7") throw FormatError("'" + file.string() + "': not a PAM file");
  Raster raster;
  int maxval = 0;
  std::string tupltype;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "ENDHDR") break;
    if (key == "WIDTH") fields >> raster.width;
    else if (key == "HEIGHT") fields >> raster.height;
    else if (key == "DEPTH") fields >> raster.depth;
    else if (key == "MAXVAL") fields >> maxval;
    else if (key == "TUPLTYPE") fields >> tupltype;
  }
  if (raster.width <= 0 || raster.height <= 0 || raster.depth < 1 || raster.depth > 4 || maxval != 255) {
    throw FormatError("'" + file.string() + "': unsupported PAM header");
  }
  read_payload(in, raster, file);
  return raster;
}

void write_pam(const std::filesystem::path& file, const Raster& raster) {
  const char* type = tuple_type(raster.depth);
  if (type == nullptr) throw InvalidInput("write_pam: unsupported depth " + std::to_string(raster.depth));
  auto out = open_out(file);
  out << "P7\nWIDTH " << raster.width << "\nHEIGHT " << raster.height << "\nDEPTH " << raster.depth
      << "\nMAXVAL 255\nTUPLTYPE " << type << "\nENDHDR\n";
  out.write(reinterpret_cast<const char*>(raster.samples.data()), static_cast<std::streamsize>(raster.samples.size()));
}

void write_pnm(const std::filesystem::path& file, const Raster& raster, const std::vector<std::string>& comments) {
  if (raster.depth != 1 && raster.depth != 3) {
    throw InvalidInput("write_pnm: depth must be 1 or 3, got " + std::to_string(raster.depth));
  }
  auto out = open_out(file);
  out << (raster.depth == 1 ? "P5\n" : "P6\n");
  for (const auto& c : comments) out << "# " << c << '\n';
  out << raster.width << ' ' << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.samples.data()), static_cast<std::streamsize>(raster.samples.size()));
}

Raster read_pnm(const std::filesystem::path& file) {
  auto in = open_in(file);
  const std::string magic = pnm_token(in);
  Raster raster;
  if (magic == "P5") raster.depth = 1;
  else if (magic == "P6") raster.depth = 3;
  else throw FormatError("'" + file.string() + "': not a binary PGM/PPM file");
  raster.width = std::stoi(pnm_token(in));
  raster.height = std::stoi(pnm_token(in));
  if (std::stoi(pnm_token(in)) != 255) throw FormatError("'" + file.string() + "': MAXVAL must be 255");
  read_payload(in, raster, file);
  return raster;
}

}  // namespace bcm
