#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ic2vqa/frame.hpp"

namespace ic2vqa {

struct FrameRate {
  std::uint32_t numerator = 25;
  std::uint32_t denominator = 1;

  double value() const {
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  friend bool operator==(const FrameRate&, const FrameRate&) = default;
};

// A video as a stack of RGB frames with values in [0,1].
struct VideoClip {
  std::vector<Frame> frames;
  FrameRate frame_rate;
  std::string source_id;

  std::size_t num_frames() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames[0].height(); }
  std::size_t width() const { return frames.empty() ? 0 : frames[0].width(); }
};

inline constexpr std::size_t kMinClipSide = 8;

// N ≥ 1, C = 3, H, W ≥ 8, uniform shapes, every value in [0,1].
// Throws ShapeError / FormatError describing the first violation.
void validate_clip(const VideoClip& clip);

// BT.601 limited-range conversion. Luma spans [16,235], chroma [16,240].
struct Ycbcr {
  double y, cb, cr;
};
Ycbcr rgb_to_ycbcr(double r, double g, double b);
void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g,
                  double& b);

// 8-bit quantization with round-half-away-from-zero, saturating to [0,255].
std::uint8_t quantize_u8(double v);

struct Y4mHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  FrameRate frame_rate;
  std::string chroma = "420jpeg";
};

// Parses a YUV4MPEG2 stream with 4:2:0 chroma into RGB frames.
VideoClip load_y4m(const std::filesystem::path& path);
// Emits a C420 YUV4MPEG2 stream. Chroma of each 2×2 block is the mean of the
// per-pixel chroma values.
void write_y4m(const VideoClip& clip, const std::filesystem::path& path);

// Loads every file in `dir` whose name matches the glob `pattern`, ordered by
// natural sort of the file name.
VideoClip load_frame_dir(const std::filesystem::path& dir,
                         const std::string& pattern = "*.png");

// "f2" < "f10": digit runs compare numerically.
bool natural_less(const std::string& a, const std::string& b);

Frame read_png(const std::filesystem::path& path);
void write_png(const Frame& rgb, const std::filesystem::path& path);

// Bilinear resampling with half-pixel-centred sampling. For an exact 2×
// reduction this is a 2×2 box average.
Frame bilinear_resize(const Frame& in, std::size_t out_h, std::size_t out_w);
// Adjoint of bilinear_resize: maps a gradient on the resized frame back to
// the source resolution.
Frame bilinear_resize_backward(const Frame& grad_out, std::size_t in_h,
                               std::size_t in_w);

// Dataset preparation: keeps the first `max_frames` frames (0 keeps all) and
// downsizes so the height is at most `target_height` (0 disables). Output
// dimensions are even so the clip stays 4:2:0 representable.
VideoClip prepare_clip(const VideoClip& clip, std::size_t max_frames,
                       std::size_t target_height);

}  // namespace ic2vqa
