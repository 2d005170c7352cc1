#include "ic2vqa/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "ic2vqa/rng.hpp"

namespace ic2vqa {

VideoClip synthesize_clip(std::uint64_t seed, std::size_t frames,
                          std::size_t height, std::size_t width,
                          std::string source_id) {
  Rng rng(derive_seed(seed, "synthetic"));
  struct Blob {
    double cy, cx, vy, vx, radius;
    double color[3];
  };
  double base[3], slope_y[3], slope_x[3], drift[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.25, 0.75);
    slope_y[c] = rng.uniform(-0.25, 0.25);
    slope_x[c] = rng.uniform(-0.25, 0.25);
    drift[c] = rng.uniform(-0.1, 0.1);
  }
  std::vector<Blob> blobs(3);
  for (Blob& b : blobs) {
    b.cy = rng.uniform(0.2, 0.8);
    b.cx = rng.uniform(0.2, 0.8);
    b.vy = rng.uniform(-0.01, 0.01);
    b.vx = rng.uniform(-0.01, 0.01);
    b.radius = rng.uniform(0.08, 0.2);
    for (double& v : b.color) v = rng.uniform(-0.3, 0.3);
  }
  const double texture_amp = rng.uniform(0.02, 0.08);
  Frame texture(1, height, width);
  for (double& v : texture.values()) v = rng.uniform(-1.0, 1.0);

  VideoClip clip;
  clip.source_id = std::move(source_id);
  clip.frame_rate = {25, 1};
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  for (std::size_t t = 0; t < frames; ++t) {
    const double phase =
        std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 75.0);
    Frame frame(3, height, width);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double ny = (static_cast<double>(y) + 0.5) / h;
        const double nx = (static_cast<double>(x) + 0.5) / w;
        for (std::size_t c = 0; c < 3; ++c) {
          double v = base[c] + slope_y[c] * (ny - 0.5) +
                     slope_x[c] * (nx - 0.5) + drift[c] * phase;
          for (const Blob& b : blobs) {
            const double by = b.cy + b.vy * static_cast<double>(t);
            const double bx = b.cx + b.vx * static_cast<double>(t);
            const double d2 = (ny - by) * (ny - by) + (nx - bx) * (nx - bx);
            v += b.color[c] * std::exp(-d2 / (2.0 * b.radius * b.radius));
          }
          v += texture_amp * texture.at(0, y, x);
          frame.at(c, y, x) = std::clamp(v, 0.02, 0.98);
        }
      }
    }
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

}  // namespace ic2vqa
