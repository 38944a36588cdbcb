#include "alphamaml/glyphs.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "alphamaml/omniglot.hpp"
#include "alphamaml/rng.hpp"

namespace fs = std::filesystem;

namespace alphamaml {

namespace {

struct Point {
  double x, y;
};

void stamp(std::vector<uint8_t>& img, long side, double cx, double cy, double radius) {
  const long r = static_cast<long>(radius) + 1;
  const long ix = static_cast<long>(cx), iy = static_cast<long>(cy);
  for (long y = std::max(0L, iy - r); y <= std::min(side - 1, iy + r); ++y)
    for (long x = std::max(0L, ix - r); x <= std::min(side - 1, ix + r); ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= radius * radius) img[static_cast<size_t>(y * side + x)] = 0;
    }
}

void draw_bezier(std::vector<uint8_t>& img, long side, Point p0, Point p1, Point p2,
                 double thickness) {
  const int steps = static_cast<int>(side * 3);
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const double u = 1.0 - t;
    const double x = u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x;
    const double y = u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y;
    stamp(img, side, x, y, thickness);
  }
}

}  // namespace

void write_glyph_dataset(const std::string& root, long n_alphabets, long chars_per_alphabet,
                         long instances, long canvas, uint64_t seed) {
  Rng top(seed);
  for (long a = 0; a < n_alphabets; ++a) {
    char alpha_name[32];
    std::snprintf(alpha_name, sizeof(alpha_name), "Alphabet%02ld", a);
    for (long c = 0; c < chars_per_alphabet; ++c) {
      char char_name[32];
      std::snprintf(char_name, sizeof(char_name), "character%02ld", c);
      const fs::path dir = fs::path(root) / alpha_name / char_name;
      fs::create_directories(dir);

      // character structure: 3-6 strokes with fixed control points
      Rng char_rng(top.next_u64());
      const long n_strokes = 3 + static_cast<long>(char_rng.below(4));
      std::vector<std::array<Point, 3>> strokes;
      const double lo = canvas * 0.12, hi = canvas * 0.88;
      for (long s = 0; s < n_strokes; ++s) {
        std::array<Point, 3> pts;
        for (auto& p : pts) p = {char_rng.uniform(lo, hi), char_rng.uniform(lo, hi)};
        strokes.push_back(pts);
      }

      for (long k = 0; k < instances; ++k) {
        Rng inst_rng(char_rng.next_u64());
        std::vector<uint8_t> img(static_cast<size_t>(canvas * canvas), 255);
        const double jitter = canvas * 0.03;
        const double thickness = canvas / 28.0 * inst_rng.uniform(0.8, 1.3);
        for (const auto& stroke : strokes) {
          std::array<Point, 3> pts = stroke;
          for (auto& p : pts) {
            p.x = std::clamp(p.x + inst_rng.normal() * jitter, 0.0, canvas - 1.0);
            p.y = std::clamp(p.y + inst_rng.normal() * jitter, 0.0, canvas - 1.0);
          }
          draw_bezier(img, canvas, pts[0], pts[1], pts[2], thickness);
        }
        char file_name[32];
        std::snprintf(file_name, sizeof(file_name), "%04ld.png", k);
        write_png_gray((dir / file_name).string(), img.data(), canvas, canvas);
      }
    }
  }
}

}  // namespace alphamaml
