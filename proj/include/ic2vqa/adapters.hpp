#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ic2vqa/frame.hpp"
#include "ic2vqa/media.hpp"

namespace ic2vqa {

// The value of a differentiable map at one input together with its
// vector-Jacobian product: pullback(u) = Jᵀu, shaped like the input frame.
struct Pullback {
  std::vector<double> value;
  std::function<Frame(std::span<const double>)> pullback;
};

// White-box image quality metric g = h_K ∘ … ∘ h_1 with a feature tap after
// every layer. Taps are 1-based; tap K is the normalized score itself.
class LayeredImageMetric {
 public:
  virtual ~LayeredImageMetric() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t num_layers() const = 0;
  // Tap names in order, tap_names()[k - 1] names tap k.
  virtual std::vector<std::string> tap_names() const = 0;
  virtual bool differentiable() const = 0;
  virtual std::size_t min_input_side() const = 0;

  // Normalized quality in [0,1].
  virtual double score_image(const Frame& frame) const = 0;
  virtual Pullback score_with_pullback(const Frame& frame) const = 0;

  // Flattened activation of tap k (channel-major).
  virtual std::vector<double> features_at_layer(const Frame& frame,
                                                std::size_t k) const = 0;
  virtual Pullback features_with_pullback(const Frame& frame,
                                          std::size_t k) const = 0;
  // Tap k activation averaged over its spatial dimensions.
  virtual std::vector<double> pooled_features(const Frame& frame,
                                              std::size_t k) const = 0;
};

class EmbeddingModel {
 public:
  virtual ~EmbeddingModel() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual bool differentiable() const = 0;

  virtual std::vector<double> embed_frame(const Frame& frame) const = 0;
  virtual Pullback embed_with_pullback(const Frame& frame) const = 0;
};

// Black-box video scorer. Exposes scores only; there is deliberately no
// gradient entry point on this interface.
class VideoQualityMetric {
 public:
  virtual ~VideoQualityMetric() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t min_frames() const { return 1; }

  double score_video(const VideoClip& clip) {
    ++query_count_;
    return evaluate(clip);
  }
  std::size_t query_count() const { return query_count_; }

  virtual std::size_t num_taps() const { return 0; }
  virtual std::vector<std::string> tap_names() const { return {}; }
  // Per-frame tap activations, spatially average-pooled, then averaged over
  // frames. Adapters without taps throw UnsupportedOperationError.
  virtual std::vector<double> extract_video_features(const VideoClip& clip,
                                                     std::size_t layer) const;

 protected:
  virtual double evaluate(const VideoClip& clip) const = 0;

 private:
  std::size_t query_count_ = 0;
};

// Accepts "3" or a tap name such as "layer3"; throws IndexError otherwise.
std::size_t resolve_tap(const std::vector<std::string>& tap_names,
                        const std::string& tap);

// Shared input checks used by the adapters.
void require_min_side(const Frame& frame, std::size_t min_side,
                      const std::string& model);
void require_tap(std::size_t k, std::size_t num_layers,
                 const std::string& model);

}  // namespace ic2vqa
