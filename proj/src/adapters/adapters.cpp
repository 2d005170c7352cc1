#include "ic2vqa/adapters.hpp"

#include <charconv>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "ic2vqa/errors.hpp"

namespace ic2vqa {

std::vector<double> VideoQualityMetric::extract_video_features(
    const VideoClip& /*clip*/, std::size_t /*layer*/) const {
  throw UnsupportedOperationError(
      fmt::format("video metric '{}' exposes no feature taps", name()));
}

std::size_t resolve_tap(const std::vector<std::string>& tap_names,
                        const std::string& tap) {
  for (std::size_t i = 0; i < tap_names.size(); ++i) {
    if (tap_names[i] == tap) return i + 1;
  }
  std::size_t index = 0;
  auto [ptr, ec] = std::from_chars(tap.data(), tap.data() + tap.size(), index);
  if (!tap.empty() && ec == std::errc() && ptr == tap.data() + tap.size() &&
      index >= 1 && index <= tap_names.size()) {
    return index;
  }
  throw IndexError(fmt::format("unknown tap '{}' (valid: 1..{} or {})", tap,
                               tap_names.size(), fmt::join(tap_names, ", ")));
}

void require_min_side(const Frame& frame, std::size_t min_side,
                      const std::string& model) {
  if (frame.channels() != 3 || frame.height() < min_side ||
      frame.width() < min_side) {
    throw ShapeError(fmt::format(
        "{}: input {} is invalid, need 3 channels and sides >= {}", model,
        frame.shape_string(), min_side));
  }
}

void require_tap(std::size_t k, std::size_t num_layers,
                 const std::string& model) {
  if (k < 1 || k > num_layers) {
    throw IndexError(fmt::format("{}: layer index {} outside 1..{}", model, k,
                                 num_layers));
  }
}

}  // namespace ic2vqa
