#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ic2vqa {

// Dense C×H×W tensor of doubles, channel-major. Used both for frames
// (values in [0,1]) and for per-frame perturbations and gradients.
class Frame {
 public:
  Frame() = default;
  Frame(std::size_t channels, std::size_t height, std::size_t width,
        double fill = 0.0);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> plane(std::size_t c) {
    return std::span<double>(data_).subspan(c * height_ * width_,
                                            height_ * width_);
  }
  std::span<const double> plane(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * height_ * width_,
                                                  height_ * width_);
  }

  bool same_shape(const Frame& other) const {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }
  std::string shape_string() const;

  Frame& operator+=(const Frame& other);
  Frame& operator-=(const Frame& other);
  Frame& operator*=(double s);

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

Frame operator+(Frame a, const Frame& b);
Frame operator-(Frame a, const Frame& b);

// Elementwise min(max(v, 0), 1).
double clamp_unit(double v);
Frame clamp_unit(Frame f);

double max_abs(const Frame& f);
double max_abs(std::span<const Frame> frames);

// Throws ShapeError unless every frame has the shape of frames[0].
void require_uniform_shape(std::span<const Frame> frames, const char* what);

}  // namespace ic2vqa
