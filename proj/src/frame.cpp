#include "ic2vqa/frame.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ic2vqa/errors.hpp"

namespace ic2vqa {

Frame::Frame(std::size_t channels, std::size_t height, std::size_t width,
             double fill)
    : channels_(channels),
      height_(height),
      width_(width),
      data_(channels * height * width, fill) {}

std::string Frame::shape_string() const {
  return fmt::format("{}x{}x{}", channels_, height_, width_);
}

Frame& Frame::operator+=(const Frame& other) {
  if (!same_shape(other)) {
    throw ShapeError(fmt::format("cannot add {} to {}", other.shape_string(),
                                 shape_string()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Frame& Frame::operator-=(const Frame& other) {
  if (!same_shape(other)) {
    throw ShapeError(fmt::format("cannot subtract {} from {}",
                                 other.shape_string(), shape_string()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Frame& Frame::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Frame operator+(Frame a, const Frame& b) { return a += b; }
Frame operator-(Frame a, const Frame& b) { return a -= b; }

double clamp_unit(double v) { return std::min(std::max(v, 0.0), 1.0); }

Frame clamp_unit(Frame f) {
  for (double& v : f.values()) v = clamp_unit(v);
  return f;
}

double max_abs(const Frame& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs(std::span<const Frame> frames) {
  double m = 0.0;
  for (const Frame& f : frames) m = std::max(m, max_abs(f));
  return m;
}

void require_uniform_shape(std::span<const Frame> frames, const char* what) {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!frames[i].same_shape(frames[0])) {
      throw ShapeError(fmt::format("{}: frame {} has shape {}, expected {}",
                                   what, i, frames[i].shape_string(),
                                   frames[0].shape_string()));
    }
  }
}

}  // namespace ic2vqa
