#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/media.hpp"

namespace ic2vqa {

namespace {

constexpr double kKr = 0.299;
constexpr double kKb = 0.114;
constexpr double kKg = 1.0 - kKr - kKb;
constexpr double kLumaScale = 219.0;
constexpr double kChromaScale = 224.0;

}  // namespace

Ycbcr rgb_to_ycbcr(double r, double g, double b) {
  const double ey = kKr * r + kKg * g + kKb * b;
  const double pb = (b - ey) / (2.0 * (1.0 - kKb));
  const double pr = (r - ey) / (2.0 * (1.0 - kKr));
  return {16.0 + kLumaScale * ey, 128.0 + kChromaScale * pb,
          128.0 + kChromaScale * pr};
}

void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g,
                  double& b) {
  const double ey = (y - 16.0) / kLumaScale;
  const double pb = (cb - 128.0) / kChromaScale;
  const double pr = (cr - 128.0) / kChromaScale;
  r = ey + 2.0 * (1.0 - kKr) * pr;
  b = ey + 2.0 * (1.0 - kKb) * pb;
  g = (ey - kKr * r - kKb * b) / kKg;
}

std::uint8_t quantize_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

void validate_clip(const VideoClip& clip) {
  if (clip.frames.empty()) throw ShapeError("clip has no frames");
  const Frame& first = clip.frames.front();
  if (first.channels() != 3) {
    throw ShapeError(fmt::format("clip must have 3 channels, got {}",
                                 first.channels()));
  }
  if (first.height() < kMinClipSide || first.width() < kMinClipSide) {
    throw ShapeError(fmt::format("clip frames are {}x{}, minimum is {}x{}",
                                 first.height(), first.width(), kMinClipSide,
                                 kMinClipSide));
  }
  require_uniform_shape(clip.frames, "clip");
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    for (double v : clip.frames[i].values()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw FormatError(
            fmt::format("frame {} holds value {} outside [0,1]", i, v));
      }
    }
  }
}

}  // namespace ic2vqa
