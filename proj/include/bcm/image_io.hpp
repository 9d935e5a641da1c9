#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace bcm {

/// 8-bit raster as stored on disk: interleaved samples, `depth` per pixel.
struct Raster {
  int width = 0;
  int height = 0;
  int depth = 0;  // 1 gray, 2 gray+alpha, 3 rgb, 4 rgb+alpha
  std::vector<unsigned char> samples;

  unsigned char& at(int y, int x, int d) { return samples[(static_cast<std::size_t>(y) * width + x) * depth + d]; }
  unsigned char at(int y, int x, int d) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * depth + d];
  }
};

/// Netpbm PAM (P7) with MAXVAL 255. TUPLTYPE is derived from depth:
/// GRAYSCALE, GRAYSCALE_ALPHA, RGB, RGB_ALPHA.
Raster read_pam(const std::filesystem::path& file);
void write_pam(const std::filesystem::path& file, const Raster& raster);

/// Binary PGM (depth 1) or PPM (depth 3). Each entry of `comments` becomes a
/// `# ` header line, which is how grids carry their config hash.
void write_pnm(const std::filesystem::path& file, const Raster& raster,
               const std::vector<std::string>& comments = {});
Raster read_pnm(const std::filesystem::path& file);

}  // namespace bcm
