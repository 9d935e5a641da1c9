// Writes the procedural trigger stencils and target images into a directory.
//
//   make_assets <dir>
//
// Stencils are GRAYSCALE_ALPHA PAM files (alpha 255 marks the mask support);
// targets are GRAYSCALE (8x8) or RGB (32x32) PAM files.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "bcm/image_io.hpp"

namespace {

using bcm::Raster;

Raster blank(int size, int depth) {
  Raster r;
  r.width = size;
  r.height = size;
  r.depth = depth;
  r.samples.assign(static_cast<std::size_t>(size) * size * depth, 0);
  return r;
}

void stencil_pixel(Raster& r, int y, int x, unsigned char gray) {
  r.at(y, x, 0) = gray;
  r.at(y, x, 1) = 255;
}

// 8x8: a filled 5x5 square in the bottom-right corner. An outline this small
// covers too few pixels to stand out from unit-variance noise.
Raster box_8() {
  Raster r = blank(8, 2);
  for (int y = 3; y < 8; ++y) {
    for (int x = 3; x < 8; ++x) stencil_pixel(r, y, x, 255);
  }
  return r;
}

// 32x32: a 10x10 square outline, 2 pixels thick, in the bottom-right corner.
Raster box_32() {
  Raster r = blank(32, 2);
  for (int y = 21; y < 31; ++y) {
    for (int x = 21; x < 31; ++x) {
      const bool edge = y < 23 || y > 28 || x < 23 || x > 28;
      if (edge) stencil_pixel(r, y, x, 255);
    }
  }
  return r;
}

// Two dark lens rings joined by a bridge.
Raster glasses(int size) {
  Raster r = blank(size, 2);
  const double s = size / 32.0;
  const double cy = 12 * s;
  const double radius = 4.5 * s;
  const double thick = std::max(1.0, 1.5 * s);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (double cx : {9.5 * s, 21.5 * s}) {
        const double d = std::hypot(y + 0.5 - cy, x + 0.5 - cx);
        if (std::abs(d - radius) < thick * 0.75) stencil_pixel(r, y, x, 0);
      }
      const bool bridge = std::abs(y + 0.5 - (cy - radius * 0.4)) < thick * 0.6 && x + 0.5 > 14 * s && x + 0.5 < 17 * s;
      if (bridge) stencil_pixel(r, y, x, 0);
    }
  }
  return r;
}

Raster hat_8() {
  Raster r = blank(8, 1);
  for (int x = 2; x < 6; ++x) {
    for (int y = 1; y < 4; ++y) r.at(y, x, 0) = 255;
    r.at(4, x, 0) = 128;  // band
  }
  for (int x = 0; x < 8; ++x) r.at(5, x, 0) = 255;  // brim
  return r;
}

Raster cat_8() {
  Raster r = blank(8, 1);
  const char* rows[8] = {
      "#......#", "##....##", "########", "#.####.#", "########", "###..###", ".######.", "..####..",
  };
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) r.at(y, x, 0) = rows[y][x] == '#' ? 230 : 0;
  }
  return r;
}

void fill_rgb(Raster& r, int y, int x, unsigned char red, unsigned char green, unsigned char blue) {
  r.at(y, x, 0) = red;
  r.at(y, x, 1) = green;
  r.at(y, x, 2) = blue;
}

Raster hat_32() {
  Raster r = blank(32, 3);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      fill_rgb(r, y, x, 230, 230, 230);
      const bool crown = y >= 6 && y < 20 && x >= 9 && x < 23;
      const bool band = y >= 17 && y < 20 && x >= 9 && x < 23;
      const bool brim = y >= 20 && y < 24 && x >= 3 && x < 29;
      if (crown || brim) fill_rgb(r, y, x, 40, 40, 60);
      if (band) fill_rgb(r, y, x, 200, 30, 30);
    }
  }
  return r;
}

Raster cat_32() {
  Raster r = blank(32, 3);
  auto inside_triangle = [](double px, double py, double ax, double ay, double bx, double by, double cx, double cy) {
    auto side = [&](double x1, double y1, double x2, double y2) { return (px - x2) * (y1 - y2) - (x1 - x2) * (py - y2); };
    const double d1 = side(ax, ay, bx, by);
    const double d2 = side(bx, by, cx, cy);
    const double d3 = side(cx, cy, ax, ay);
    const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(neg && pos);
  };
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      fill_rgb(r, y, x, 70, 110, 170);
      const bool head = std::hypot(px - 16, py - 18) < 10;
      const bool ears = inside_triangle(px, py, 7, 13, 10, 3, 14, 10) || inside_triangle(px, py, 25, 13, 22, 3, 18, 10);
      if (head || ears) fill_rgb(r, y, x, 240, 150, 50);
      const bool eye = std::hypot(px - 12, py - 16) < 1.8 || std::hypot(px - 20, py - 16) < 1.8;
      if (eye) fill_rgb(r, y, x, 20, 120, 20);
      if (std::hypot(px - 16, py - 21) < 1.3) fill_rgb(r, y, x, 230, 100, 120);
    }
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <asset-dir>\n", argv[0]);
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  const std::pair<const char*, std::function<Raster()>> assets[] = {
      {"box_8x8.pam", box_8},           {"box_32x32.pam", box_32},
      {"glasses_8x8.pam", [] { return glasses(8); }}, {"glasses_32x32.pam", [] { return glasses(32); }},
      {"hat_8x8.pam", hat_8},           {"hat_32x32.pam", hat_32},
      {"cat_8x8.pam", cat_8},           {"cat_32x32.pam", cat_32},
  };
  for (const auto& [name, make] : assets) {
    bcm::write_pam(dir / name, make());
    std::printf("wrote %s\n", (dir / name).string().c_str());
  }
  return 0;
}
