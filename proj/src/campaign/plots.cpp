#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "ic2vqa/campaign.hpp"
#include "ic2vqa/errors.hpp"

namespace ic2vqa {

namespace {

using Rgb = std::array<double, 3>;

const std::array<Rgb, 6> kPalette{{{0.12, 0.47, 0.71},
                                   {0.84, 0.15, 0.16},
                                   {0.17, 0.63, 0.17},
                                   {1.00, 0.50, 0.05},
                                   {0.58, 0.40, 0.74},
                                   {0.55, 0.34, 0.29}}};

void put(Frame& img, long y, long x, const Rgb& c) {
  if (y < 0 || x < 0 || y >= static_cast<long>(img.height()) ||
      x >= static_cast<long>(img.width())) {
    return;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    img.at(k, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = c[k];
  }
}

void line(Frame& img, long y0, long x0, long y1, long x1, const Rgb& c) {
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    for (long oy = -1; oy <= 1; ++oy) put(img, y0 + oy, x0, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

// Diverging blue-white-red map over [-100, 100].
Rgb diverging(double v) {
  const double t = std::clamp(v / 100.0, -1.0, 1.0);
  if (t >= 0) return {1.0, 1.0 - 0.8 * t, 1.0 - 0.8 * t};
  return {1.0 + 0.8 * t, 1.0 + 0.8 * t, 1.0};
}

}  // namespace

void render_curves_png(const std::vector<Series>& series,
                       const std::filesystem::path& path) {
  constexpr long kW = 480, kH = 320, kMargin = 30;
  Frame img(3, kH, kW, 1.0);
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = 0.0, ymax = 1.0;
  for (const Series& s : series) {
    for (double x : s.x) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
    for (double y : s.y) {
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin)) throw NotFoundError("no curve data to plot");
  if (xmax == xmin) xmax = xmin + 1.0;
  auto px = [&](double x) {
    return kMargin + std::lround((x - xmin) / (xmax - xmin) * (kW - 2 * kMargin));
  };
  auto py = [&](double y) {
    return kH - kMargin -
           std::lround((y - ymin) / (ymax - ymin) * (kH - 2 * kMargin));
  };
  const Rgb axis{0.2, 0.2, 0.2};
  line(img, kH - kMargin, kMargin, kH - kMargin, kW - kMargin, axis);
  line(img, kMargin, kMargin, kH - kMargin, kMargin, axis);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const Rgb& c = kPalette[i % kPalette.size()];
    for (std::size_t k = 0; k + 1 < s.x.size(); ++k) {
      line(img, py(s.y[k]), px(s.x[k]), py(s.y[k + 1]), px(s.x[k + 1]), c);
    }
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      for (long oy = -2; oy <= 2; ++oy) {
        for (long ox = -2; ox <= 2; ++ox) put(img, py(s.y[k]) + oy, px(s.x[k]) + ox, c);
      }
    }
  }
  write_png(img, path);
}

void render_heatmap_png(const FeatureMatrix& matrix,
                        const std::filesystem::path& path) {
  constexpr std::size_t kCell = 24;
  const std::size_t rows = matrix.values.size();
  const std::size_t cols = rows ? matrix.values[0].size() : 0;
  if (rows == 0 || cols == 0) throw NotFoundError("empty heatmap");
  Frame img(3, rows * kCell, cols * kCell, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const Rgb color = diverging(matrix.values[r][c]);
      for (std::size_t y = 1; y < kCell; ++y) {
        for (std::size_t x = 1; x < kCell; ++x) {
          put(img, static_cast<long>(r * kCell + y),
              static_cast<long>(c * kCell + x), color);
        }
      }
    }
  }
  write_png(img, path);
}

}  // namespace ic2vqa
