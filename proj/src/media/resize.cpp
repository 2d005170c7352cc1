#include <algorithm>
#include <cmath>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/media.hpp"

namespace ic2vqa {

namespace {

struct Tap {
  std::size_t lo, hi;
  double weight_hi;
};

// Source sample positions for every output index along one axis.
std::vector<Tap> axis_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, s - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Frame bilinear_resize(const Frame& in, std::size_t out_h, std::size_t out_w) {
  if (in.empty() || out_h == 0 || out_w == 0) {
    throw ShapeError("bilinear_resize: empty input or output");
  }
  if (out_h == in.height() && out_w == in.width()) return in;
  const auto ty = axis_taps(in.height(), out_h);
  const auto tx = axis_taps(in.width(), out_w);
  Frame out(in.channels(), out_h, out_w);
  for (std::size_t c = 0; c < in.channels(); ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const double top = in.at(c, a.lo, b.lo) * (1.0 - b.weight_hi) +
                           in.at(c, a.lo, b.hi) * b.weight_hi;
        const double bottom = in.at(c, a.hi, b.lo) * (1.0 - b.weight_hi) +
                              in.at(c, a.hi, b.hi) * b.weight_hi;
        out.at(c, y, x) = top * (1.0 - a.weight_hi) + bottom * a.weight_hi;
      }
    }
  }
  return out;
}

Frame bilinear_resize_backward(const Frame& grad_out, std::size_t in_h,
                               std::size_t in_w) {
  if (grad_out.height() == in_h && grad_out.width() == in_w) return grad_out;
  const auto ty = axis_taps(in_h, grad_out.height());
  const auto tx = axis_taps(in_w, grad_out.width());
  Frame grad_in(grad_out.channels(), in_h, in_w);
  for (std::size_t c = 0; c < grad_out.channels(); ++c) {
    for (std::size_t y = 0; y < grad_out.height(); ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < grad_out.width(); ++x) {
        const Tap& b = tx[x];
        const double g = grad_out.at(c, y, x);
        grad_in.at(c, a.lo, b.lo) += g * (1.0 - a.weight_hi) * (1.0 - b.weight_hi);
        grad_in.at(c, a.lo, b.hi) += g * (1.0 - a.weight_hi) * b.weight_hi;
        grad_in.at(c, a.hi, b.lo) += g * a.weight_hi * (1.0 - b.weight_hi);
        grad_in.at(c, a.hi, b.hi) += g * a.weight_hi * b.weight_hi;
      }
    }
  }
  return grad_in;
}

VideoClip prepare_clip(const VideoClip& clip, std::size_t max_frames,
                       std::size_t target_height) {
  VideoClip out;
  out.frame_rate = clip.frame_rate;
  out.source_id = clip.source_id;
  const std::size_t n = max_frames == 0
                            ? clip.num_frames()
                            : std::min(max_frames, clip.num_frames());
  std::size_t out_h = clip.height();
  std::size_t out_w = clip.width();
  if (target_height != 0 && clip.height() > target_height) {
    out_h = target_height & ~std::size_t{1};
    const double scaled = static_cast<double>(clip.width()) *
                          static_cast<double>(out_h) /
                          static_cast<double>(clip.height());
    out_w = static_cast<std::size_t>(std::lround(scaled / 2.0)) * 2;
    out_h = std::max(out_h, kMinClipSide);
    out_w = std::max(out_w, kMinClipSide);
  }
  out.frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.frames.push_back(bilinear_resize(clip.frames[i], out_h, out_w));
  }
  return out;
}

}  // namespace ic2vqa
