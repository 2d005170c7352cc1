#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ic2vqa/adapters.hpp"

namespace ic2vqa {

inline constexpr double kCosineGuard = 1e-12;

// A scalar loss and, when requested, its gradient with respect to δ (one
// frame per video frame).
struct LossValue {
  double value = 0.0;
  std::vector<Frame> gradient;
};

// cos(a, b) = a·b / (‖a‖‖b‖ + 1e-12). Throws DegenerateFeatureError naming
// `frame_index` when either vector has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         std::size_t frame_index = 0);
// d cos(a, b) / da.
std::vector<double> cosine_gradient(std::span<const double> a,
                                    std::span<const double> b);

// Mean cosine similarity between a feature map of the attacked frames and
// the saved feature map of the clean frames. Clean features are computed once
// at construction and carry no gradient.
class CrossLayerTerm {
 public:
  CrossLayerTerm(const LayeredImageMetric& metric, std::size_t k,
                 std::span<const Frame> clean);
  // Uses caller-supplied clean features (one vector per frame).
  CrossLayerTerm(const LayeredImageMetric& metric, std::size_t k,
                 std::span<const Frame> clean,
                 std::vector<std::vector<double>> clean_features);

  LossValue evaluate(std::span<const Frame> delta, bool with_gradient) const;
  // Per-frame cosines, used by the weighted multi-metric form.
  std::vector<double> frame_cosines(std::span<const Frame> delta) const;

  const LayeredImageMetric& metric() const { return *metric_; }
  std::size_t layer() const { return k_; }

 private:
  const LayeredImageMetric* metric_;
  std::size_t k_;
  std::span<const Frame> clean_;
  std::vector<std::vector<double>> clean_features_;
};

class EmbedTerm {
 public:
  EmbedTerm(const EmbeddingModel& embedder, std::span<const Frame> clean);
  LossValue evaluate(std::span<const Frame> delta, bool with_gradient) const;

 private:
  const EmbeddingModel* embedder_;
  std::span<const Frame> clean_;
  std::vector<std::vector<double>> clean_embeddings_;
};

// (1/N) Σ_i cos(g_k(x_i + δ_i), g_k(x_i)).
double cross_layer_loss(const LayeredImageMetric& metric, std::size_t k,
                        std::span<const Frame> x, std::span<const Frame> delta);
LossValue cross_layer_loss_with_gradient(const LayeredImageMetric& metric,
                                         std::size_t k,
                                         std::span<const Frame> x,
                                         std::span<const Frame> delta);

struct WeightedTap {
  const LayeredImageMetric* metric = nullptr;
  std::size_t layer = 1;
  double alpha = 1.0;
};

// (1/N) Σ_i Σ_f α_f cos_f(i) + (1/F) Σ_f |1 − α_f|.
double multi_metric_loss(std::span<const WeightedTap> metrics,
                         std::span<const Frame> x,
                         std::span<const Frame> delta);
LossValue multi_metric_loss_with_gradient(std::span<const WeightedTap> metrics,
                                          std::span<const Frame> x,
                                          std::span<const Frame> delta);

// (1/(N−1)) Σ_i ‖δ_{i+1} − δ_i‖₂; zero (with a warning) for a single frame.
double temporal_loss(std::span<const Frame> delta);
LossValue temporal_loss_with_gradient(std::span<const Frame> delta);

// (1/N) Σ_i cos(e(x_i + δ_i), e(x_i)).
double embed_similarity_loss(const EmbeddingModel& embedder,
                             std::span<const Frame> x,
                             std::span<const Frame> delta);
LossValue embed_similarity_loss_with_gradient(const EmbeddingModel& embedder,
                                              std::span<const Frame> x,
                                              std::span<const Frame> delta);

struct LossConfig {
  bool use_xlayer = true;
  bool use_embed = false;
  bool use_temporal = false;
  std::map<std::string, std::size_t> layer_per_metric;
  std::map<std::string, double> metric_weights;

  // At least one term enabled and every α_f > 0; throws ConfigError.
  void validate() const;
  double weight_for(const std::string& metric) const;
};

struct LossBreakdown {
  double xlayer = 0.0;
  double embed = 0.0;
  double temporal = 0.0;
  double total = 0.0;
  std::vector<Frame> gradient;
};

// Everything a loss evaluation needs for one attack run: the white-box
// metrics with their taps, the optional embedder, and the clean frames.
class LossContext {
 public:
  LossContext(LossConfig config,
              std::vector<const LayeredImageMetric*> metrics,
              const EmbeddingModel* embedder, std::span<const Frame> clean);

  std::size_t num_metrics() const { return terms_.size(); }
  const LossConfig& config() const { return config_; }

  // One sequential step: α_f · L_xlayer of metric f plus the enabled
  // embedding and temporal terms.
  LossBreakdown evaluate_step(std::size_t f, std::span<const Frame> delta,
                              bool with_gradient) const;
  // Summed form: the weighted multi-metric loss plus the enabled embedding
  // and temporal terms.
  LossBreakdown evaluate_summed(std::span<const Frame> delta,
                                bool with_gradient) const;

 private:
  LossConfig config_;
  std::vector<CrossLayerTerm> terms_;
  std::vector<WeightedTap> taps_;
  std::optional<EmbedTerm> embed_;
  std::span<const Frame> clean_;
};

// Sum of the enabled terms, summed multi-metric form.
LossBreakdown total_loss(const LossContext& context,
                         std::span<const Frame> delta,
                         bool with_gradient = false);

}  // namespace ic2vqa
