#include "bcm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bcm/csv.hpp"
#include "bcm/errors.hpp"

namespace bcm {

std::string_view to_string(PlotKind kind) noexcept {
  return kind == PlotKind::fid_mse_vs_rate ? "fid_mse_vs_rate" : "loss_curves";
}

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "fid_mse_vs_rate") return PlotKind::fid_mse_vs_rate;
  if (name == "loss_curves") return PlotKind::loss_curves;
  throw InvalidInput("unknown plot kind '" + std::string(name) + "'");
}

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 70;
constexpr double kRight = 70;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

struct Point {
  double x;
  double y;
};

struct Series {
  std::string label;
  std::vector<Point> points;
  bool right_axis = false;
};

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && std::isfinite(out);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = 0;
  double hi = 1;
};

Range range_of(const std::vector<Series>& all, bool right, bool use_x) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const auto& s : all) {
    if (!use_x && s.right_axis != right) continue;
    for (const auto& p : s.points) {
      const double v = use_x ? p.x : p.y;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {};
  if (hi - lo < 1e-12) {
    const double pad = std::max(1e-3, std::abs(lo) * 0.1);
    return {lo - pad, hi + pad};
  }
  const double pad = 0.05 * (hi - lo);
  return {use_x ? lo : lo - pad, use_x ? hi : hi + pad};
}

std::string svg(const std::vector<Series>& all, const std::string& title, const std::string& x_label,
                const std::string& left_label, const std::string& right_label, const std::string& hash) {
  const Range xr = range_of(all, false, true);
  const Range yl = range_of(all, false, false);
  const Range yr = range_of(all, true, false);
  const bool has_right = std::any_of(all.begin(), all.end(), [](const Series& s) { return s.right_axis; });
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y, const Range& r) { return kTop + ph - (y - r.lo) / (r.hi - r.lo) * ph; };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!hash.empty()) o << "<!-- config_hash=" << hash << " -->\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kWidth / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
    << "</text>\n";
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double f = i / 4.0;
    const double xv = xr.lo + f * (xr.hi - xr.lo);
    const double xpos = px(xv);
    o << "<line x1=\"" << num(xpos) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(xpos) << "\" y2=\""
      << num(kTop + ph + 4) << "\" stroke=\"black\"/>";
    o << "<text x=\"" << num(xpos) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">" << label(xv)
      << "</text>\n";
    const double ylv = yl.lo + f * (yl.hi - yl.lo);
    const double ypos = py(ylv, yl);
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(ypos + 4) << "\" text-anchor=\"end\" fill=\""
      << kColors[0] << "\">" << label(ylv) << "</text>\n";
    if (has_right) {
      const double yrv = yr.lo + f * (yr.hi - yr.lo);
      o << "<text x=\"" << num(kLeft + pw + 6) << "\" y=\"" << num(py(yrv, yr) + 4) << "\" fill=\"" << kColors[1]
        << "\">" << label(yrv) << "</text>\n";
    }
  }
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
    << x_label << "</text>\n";
  o << "<text transform=\"translate(16," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << left_label << "</text>\n";
  if (has_right) {
    o << "<text transform=\"translate(" << num(kWidth - 12) << "," << num(kTop + ph / 2)
      << ") rotate(90)\" text-anchor=\"middle\">" << right_label << "</text>\n";
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& s = all[i];
    const char* color = kColors[i % std::size(kColors)];
    const Range& r = s.right_axis ? yr : yl;
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      o << (j ? " " : "") << num(px(s.points[j].x)) << "," << num(py(s.points[j].y, r));
    }
    o << "\"/>\n";
    for (const auto& p : s.points) {
      o << "<circle cx=\"" << num(px(p.x)) << "\" cy=\"" << num(py(p.y, r)) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    }
    o << "<text x=\"" << num(kLeft + 8) << "\" y=\"" << num(kTop + 14 + 14 * static_cast<double>(i)) << "\" fill=\""
      << color << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::filesystem::path render_plot(const std::filesystem::path& csv, PlotKind kind, std::filesystem::path out) {
  const CsvTable table = read_csv(csv);
  if (out.empty()) out = csv.parent_path() / (std::string(to_string(kind)) + ".svg");

  std::vector<Series> series;
  std::string document;
  const std::string hash = table.comment_value("config_hash");
  if (kind == PlotKind::fid_mse_vs_rate) {
    const auto rate = table.column("rate");
    const auto fid = table.column("fid");
    const auto mse = table.column("mse");
    Series f{"FID", {}, false};
    Series m{"MSE", {}, true};
    for (const auto& row : table.rows) {
      double x = 0;
      double y = 0;
      if (!parse_double(row[rate], x)) continue;
      if (parse_double(row[fid], y)) f.points.push_back({x, y});
      if (parse_double(row[mse], y)) m.points.push_back({x, y});
    }
    if (f.points.empty() && m.points.empty()) throw EmptyInput("plot: '" + csv.string() + "' has no usable rows");
    series = {f, m};
    document = svg(series, "FID and MSE vs poison rate", "poison rate", "FID", "MSE", hash);
  } else {
    const auto tick = table.column("tick");
    const auto branch = table.column("branch");
    const auto loss = table.column("loss_mean");
    std::map<std::string, Series> by_branch;
    for (const auto& row : table.rows) {
      double x = 0;
      double y = 0;
      if (!parse_double(row[tick], x) || !parse_double(row[loss], y)) continue;
      auto& s = by_branch[row[branch]];
      s.label = row[branch];
      s.points.push_back({x, y});
    }
    if (by_branch.empty()) throw EmptyInput("plot: '" + csv.string() + "' has no usable rows");
    for (auto& [name, s] : by_branch) series.push_back(std::move(s));
    document = svg(series, "Training loss", "tick", "mean loss", "", hash);
  }

  std::ofstream file(out, std::ios::binary);
  if (!file) throw FormatError("cannot open '" + out.string() + "' for writing");
  file << document;
  return out;
}

}  // namespace bcm
