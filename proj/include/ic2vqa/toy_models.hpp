#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "ic2vqa/adapters.hpp"

namespace ic2vqa {

// 3×3 convolution with zero padding of one pixel, followed by tanh.
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::vector<double> weights;  // [out][in][ky][kx]
  std::vector<double> bias;     // [out]

  double weight(std::size_t o, std::size_t c, std::size_t ky,
                std::size_t kx) const {
    return weights[((o * in_channels + c) * 3 + ky) * 3 + kx];
  }
  std::size_t output_extent(std::size_t in) const {
    return (in - 1) / stride + 1;
  }
};

struct LinearHead {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // [out][in]
  std::vector<double> bias;     // [out]
};

// Per-channel standardization, optionally preceded by a bilinear resize to a
// fixed square input. Differentiable; lives inside the adapter so gradients
// reach the original-resolution frame.
struct Preprocess {
  std::array<double, 3> mean{0.45, 0.45, 0.45};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
  std::size_t resize_side = 0;  // 0 keeps the native resolution

  Frame apply(const Frame& frame) const;
  Frame backward(const Frame& grad, std::size_t in_h, std::size_t in_w) const;
};

// Four conv+tanh layers with strides 2, 2, 2, 1. This is the backbone shared
// by every toy adapter built from the same seed.
class ToyBackbone {
 public:
  static constexpr std::size_t kNumLayers = 4;

  // activations[0] is the preprocessed input, activations[l] the output of
  // layer l.
  struct Trace {
    std::vector<Frame> activations;
  };

  ToyBackbone() = default;
  explicit ToyBackbone(std::vector<ConvLayer> layers);
  static ToyBackbone random(std::uint64_t seed, std::size_t width);

  Trace forward(const Frame& input, std::size_t upto = kNumLayers) const;
  // Gradient with respect to activations[0] given the gradient at
  // activations[layer].
  Frame backward(const Trace& trace, std::size_t layer, Frame grad) const;

  std::size_t width() const { return layers_.back().out_channels; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  std::size_t backward_calls() const { return backward_calls_; }

 private:
  std::vector<ConvLayer> layers_;
  mutable std::size_t backward_calls_ = 0;
};

// Spatial mean per channel.
std::vector<double> global_average_pool(const Frame& activation);

enum class ToyKind { kIqa, kVqa, kEmbed };

struct ToyOptions {
  std::size_t width = 8;
  std::size_t embed_dim = 0;  // 0 means 2 × width
  Preprocess preprocess;
};

// Everything needed to rebuild a toy adapter; this is the weight-file schema.
struct ToyWeights {
  ToyKind kind = ToyKind::kIqa;
  std::string name;
  Preprocess preprocess;
  std::vector<ConvLayer> backbone;
  LinearHead head;

  static ToyWeights generate(std::uint64_t seed, ToyKind kind,
                             const ToyOptions& options);
  void save(const std::filesystem::path& path) const;
  static ToyWeights load(const std::filesystem::path& path);
};

// IQA stand-in: taps layer1..layer4 are the backbone outputs, tap 5 is the
// score sigmoid(head · pooled(layer4)).
class ToyIqa final : public LayeredImageMetric {
 public:
  explicit ToyIqa(ToyWeights weights);

  const std::string& name() const override { return name_; }
  std::size_t num_layers() const override {
    return ToyBackbone::kNumLayers + 1;
  }
  std::vector<std::string> tap_names() const override;
  bool differentiable() const override { return true; }
  std::size_t min_input_side() const override { return 4; }

  double score_image(const Frame& frame) const override;
  Pullback score_with_pullback(const Frame& frame) const override;
  std::vector<double> features_at_layer(const Frame& frame,
                                        std::size_t k) const override;
  Pullback features_with_pullback(const Frame& frame,
                                  std::size_t k) const override;
  std::vector<double> pooled_features(const Frame& frame,
                                      std::size_t k) const override;

  const ToyBackbone& backbone() const { return backbone_; }
  const LinearHead& head() const { return head_; }
  const Preprocess& preprocess() const { return preprocess_; }

 private:
  std::string name_;
  Preprocess preprocess_;
  ToyBackbone backbone_;
  LinearHead head_;
};

// VQA stand-in: the toy IQA score of every frame, averaged over time. Built
// from the same seed it reproduces ToyIqa::score_image frame by frame.
class ToyVqa final : public VideoQualityMetric {
 public:
  explicit ToyVqa(ToyWeights weights);

  const std::string& name() const override { return name_; }
  std::size_t num_taps() const override { return ToyBackbone::kNumLayers; }
  std::vector<std::string> tap_names() const override;
  std::vector<double> extract_video_features(const VideoClip& clip,
                                             std::size_t layer) const override;

  double frame_score(const Frame& frame) const;
  const ToyBackbone& backbone() const { return backbone_; }
  const LinearHead& head() const { return head_; }
  const Preprocess& preprocess() const { return preprocess_; }

 protected:
  double evaluate(const VideoClip& clip) const override;

 private:
  std::string name_;
  Preprocess preprocess_;
  ToyBackbone backbone_;
  LinearHead head_;
};

// Embedding stand-in: head · pooled(layer4), no squashing.
class ToyEmbedder final : public EmbeddingModel {
 public:
  explicit ToyEmbedder(ToyWeights weights);

  const std::string& name() const override { return name_; }
  std::size_t embed_dim() const override { return head_.out; }
  bool differentiable() const override { return true; }

  std::vector<double> embed_frame(const Frame& frame) const override;
  Pullback embed_with_pullback(const Frame& frame) const override;

  const ToyBackbone& backbone() const { return backbone_; }
  const LinearHead& head() const { return head_; }
  const Preprocess& preprocess() const { return preprocess_; }

 private:
  std::string name_;
  Preprocess preprocess_;
  ToyBackbone backbone_;
  LinearHead head_;
};

using ToyAdapter = std::variant<std::unique_ptr<ToyIqa>, std::unique_ptr<ToyVqa>,
                                std::unique_ptr<ToyEmbedder>>;

// Deterministic desk-scale stand-ins. Adapters of different kinds built from
// the same seed share the backbone weights exactly.
ToyAdapter make_toy_metric(std::uint64_t seed, ToyKind kind,
                           std::size_t width = 8);
ToyAdapter make_toy_metric(std::uint64_t seed, ToyKind kind,
                           const ToyOptions& options);

std::unique_ptr<ToyIqa> make_toy_iqa(std::uint64_t seed,
                                     const ToyOptions& options = {});
std::unique_ptr<ToyVqa> make_toy_vqa(std::uint64_t seed,
                                     const ToyOptions& options = {});
std::unique_ptr<ToyEmbedder> make_toy_embedder(std::uint64_t seed,
                                               const ToyOptions& options = {});

std::string to_string(ToyKind kind);
ToyKind parse_toy_kind(const std::string& text);

}  // namespace ic2vqa
