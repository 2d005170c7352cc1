#include "ic2vqa/losses.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ic2vqa/errors.hpp"

namespace ic2vqa {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void require_matching(std::span<const Frame> x, std::span<const Frame> delta) {
  if (x.empty()) throw ShapeError("loss needs at least one frame");
  if (x.size() != delta.size()) {
    throw ShapeError(fmt::format("clip has {} frames but perturbation has {}",
                                 x.size(), delta.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x[i].same_shape(delta[i])) {
      throw ShapeError(fmt::format("frame {}: clip {} vs perturbation {}", i,
                                   x[i].shape_string(),
                                   delta[i].shape_string()));
    }
  }
}

std::vector<Frame> zeros_like(std::span<const Frame> frames) {
  std::vector<Frame> out;
  out.reserve(frames.size());
  for (const Frame& f : frames) {
    out.emplace_back(f.channels(), f.height(), f.width());
  }
  return out;
}

void accumulate(std::vector<Frame>& into, const std::vector<Frame>& from,
                double scale) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    auto dst = into[i].values();
    const auto src = from[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

// Mean cosine between f(x_i + δ_i) and saved clean vectors, with the
// gradient routed back through `evaluate`.
template <typename Evaluate>
LossValue mean_cosine(std::span<const Frame> clean,
                      std::span<const Frame> delta,
                      const std::vector<std::vector<double>>& clean_vectors,
                      bool with_gradient, Evaluate&& evaluate) {
  LossValue out;
  const double inv_n = 1.0 / static_cast<double>(clean.size());
  if (with_gradient) out.gradient.reserve(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Pullback attacked = evaluate(clean[i] + delta[i]);
    const auto& c = clean_vectors[i];
    if (attacked.value.size() != c.size()) {
      throw ShapeError(fmt::format("frame {}: feature length {} vs clean {}",
                                   i, attacked.value.size(), c.size()));
    }
    out.value += cosine_similarity(attacked.value, c, i) * inv_n;
    if (with_gradient) {
      auto g = cosine_gradient(attacked.value, c);
      for (double& v : g) v *= inv_n;
      out.gradient.push_back(attacked.pullback(g));
    }
  }
  return out;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         std::size_t frame_index) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateFeatureError(
        fmt::format("zero-norm feature vector at frame {}", frame_index),
        frame_index);
  }
  return dot(a, b) / (na * nb + kCosineGuard);
}

std::vector<double> cosine_gradient(std::span<const double> a,
                                    std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  const double denom = na * nb + kCosineGuard;
  const double ab = dot(a, b);
  const double coef = ab * nb / (na * denom * denom);
  std::vector<double> g(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    g[j] = b[j] / denom - coef * a[j];
  }
  return g;
}

// ---------------------------------------------------------------------------

CrossLayerTerm::CrossLayerTerm(const LayeredImageMetric& metric, std::size_t k,
                               std::span<const Frame> clean)
    : metric_(&metric), k_(k), clean_(clean) {
  require_tap(k, metric.num_layers(), metric.name());
  if (!metric.differentiable()) {
    throw CapabilityError(
        fmt::format("metric '{}' is not differentiable", metric.name()));
  }
  clean_features_.reserve(clean.size());
  for (const Frame& frame : clean) {
    clean_features_.push_back(metric.features_at_layer(frame, k));
  }
}

CrossLayerTerm::CrossLayerTerm(const LayeredImageMetric& metric, std::size_t k,
                               std::span<const Frame> clean,
                               std::vector<std::vector<double>> clean_features)
    : metric_(&metric),
      k_(k),
      clean_(clean),
      clean_features_(std::move(clean_features)) {
  require_tap(k, metric.num_layers(), metric.name());
  if (clean_features_.size() != clean.size()) {
    throw ShapeError("one clean feature vector per frame is required");
  }
}

LossValue CrossLayerTerm::evaluate(std::span<const Frame> delta,
                                   bool with_gradient) const {
  require_matching(clean_, delta);
  return mean_cosine(clean_, delta, clean_features_, with_gradient,
                     [this](const Frame& input) {
                       return metric_->features_with_pullback(input, k_);
                     });
}

std::vector<double> CrossLayerTerm::frame_cosines(
    std::span<const Frame> delta) const {
  require_matching(clean_, delta);
  std::vector<double> out(clean_.size());
  for (std::size_t i = 0; i < clean_.size(); ++i) {
    const auto attacked = metric_->features_at_layer(clean_[i] + delta[i], k_);
    out[i] = cosine_similarity(attacked, clean_features_[i], i);
  }
  return out;
}

EmbedTerm::EmbedTerm(const EmbeddingModel& embedder,
                     std::span<const Frame> clean)
    : embedder_(&embedder), clean_(clean) {
  if (!embedder.differentiable()) {
    throw CapabilityError(
        fmt::format("embedder '{}' is not differentiable", embedder.name()));
  }
  clean_embeddings_.reserve(clean.size());
  for (const Frame& frame : clean) {
    clean_embeddings_.push_back(embedder.embed_frame(frame));
  }
}

LossValue EmbedTerm::evaluate(std::span<const Frame> delta,
                              bool with_gradient) const {
  require_matching(clean_, delta);
  return mean_cosine(clean_, delta, clean_embeddings_, with_gradient,
                     [this](const Frame& input) {
                       return embedder_->embed_with_pullback(input);
                     });
}

// ---------------------------------------------------------------------------

double cross_layer_loss(const LayeredImageMetric& metric, std::size_t k,
                        std::span<const Frame> x,
                        std::span<const Frame> delta) {
  return CrossLayerTerm(metric, k, x).evaluate(delta, false).value;
}

LossValue cross_layer_loss_with_gradient(const LayeredImageMetric& metric,
                                         std::size_t k,
                                         std::span<const Frame> x,
                                         std::span<const Frame> delta) {
  return CrossLayerTerm(metric, k, x).evaluate(delta, true);
}

namespace {

LossValue multi_metric_impl(std::span<const WeightedTap> metrics,
                            std::span<const CrossLayerTerm> terms,
                            std::span<const Frame> delta, bool with_gradient) {
  if (metrics.empty()) throw ConfigError("multi-metric loss needs F >= 1");
  LossValue out;
  if (with_gradient) out.gradient = zeros_like(delta);
  double regularizer = 0.0;
  for (std::size_t f = 0; f < metrics.size(); ++f) {
    const double alpha = metrics[f].alpha;
    if (!(alpha > 0.0)) {
      throw ConfigError(fmt::format("metric weight {} must be positive", alpha));
    }
    LossValue term = terms[f].evaluate(delta, with_gradient);
    out.value += alpha * term.value;
    if (with_gradient) accumulate(out.gradient, term.gradient, alpha);
    regularizer += std::abs(1.0 - alpha);
  }
  out.value += regularizer / static_cast<double>(metrics.size());
  return out;
}

std::vector<CrossLayerTerm> build_terms(std::span<const WeightedTap> metrics,
                                        std::span<const Frame> x) {
  std::vector<CrossLayerTerm> terms;
  terms.reserve(metrics.size());
  for (const WeightedTap& t : metrics) {
    if (t.metric == nullptr) throw ConfigError("null metric in loss");
    terms.emplace_back(*t.metric, t.layer, x);
  }
  return terms;
}

}  // namespace

double multi_metric_loss(std::span<const WeightedTap> metrics,
                         std::span<const Frame> x,
                         std::span<const Frame> delta) {
  if (metrics.empty()) throw ConfigError("multi-metric loss needs F >= 1");
  const auto terms = build_terms(metrics, x);
  return multi_metric_impl(metrics, terms, delta, false).value;
}

LossValue multi_metric_loss_with_gradient(std::span<const WeightedTap> metrics,
                                          std::span<const Frame> x,
                                          std::span<const Frame> delta) {
  if (metrics.empty()) throw ConfigError("multi-metric loss needs F >= 1");
  const auto terms = build_terms(metrics, x);
  return multi_metric_impl(metrics, terms, delta, true);
}

LossValue temporal_loss_with_gradient(std::span<const Frame> delta) {
  if (delta.empty()) throw ShapeError("temporal loss needs at least one frame");
  LossValue out;
  out.gradient = zeros_like(delta);
  if (delta.size() == 1) {
    spdlog::warn("temporal loss on a single-frame perturbation is defined as 0");
    return out;
  }
  require_uniform_shape(delta, "temporal loss");
  const double inv = 1.0 / static_cast<double>(delta.size() - 1);
  for (std::size_t i = 0; i + 1 < delta.size(); ++i) {
    const auto a = delta[i].values();
    const auto b = delta[i + 1].values();
    double sq = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = b[j] - a[j];
      sq += d * d;
    }
    const double r = std::sqrt(sq);
    out.value += r * inv;
    // Non-smooth at r = 0; the zero subgradient is used there.
    if (r > 0.0) {
      auto ga = out.gradient[i].values();
      auto gb = out.gradient[i + 1].values();
      const double scale = inv / r;
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = (b[j] - a[j]) * scale;
        gb[j] += d;
        ga[j] -= d;
      }
    }
  }
  return out;
}

double temporal_loss(std::span<const Frame> delta) {
  return temporal_loss_with_gradient(delta).value;
}

double embed_similarity_loss(const EmbeddingModel& embedder,
                             std::span<const Frame> x,
                             std::span<const Frame> delta) {
  return EmbedTerm(embedder, x).evaluate(delta, false).value;
}

LossValue embed_similarity_loss_with_gradient(const EmbeddingModel& embedder,
                                              std::span<const Frame> x,
                                              std::span<const Frame> delta) {
  return EmbedTerm(embedder, x).evaluate(delta, true);
}

// ---------------------------------------------------------------------------

void LossConfig::validate() const {
  if (!use_xlayer && !use_embed && !use_temporal) {
    throw ConfigError("loss config enables no terms");
  }
  for (const auto& [name, alpha] : metric_weights) {
    if (!(alpha > 0.0)) {
      throw ConfigError(
          fmt::format("metric weight for '{}' must be positive, got {}", name,
                      alpha));
    }
  }
}

double LossConfig::weight_for(const std::string& metric) const {
  const auto it = metric_weights.find(metric);
  return it == metric_weights.end() ? 1.0 : it->second;
}

LossContext::LossContext(LossConfig config,
                         std::vector<const LayeredImageMetric*> metrics,
                         const EmbeddingModel* embedder,
                         std::span<const Frame> clean)
    : config_(std::move(config)), clean_(clean) {
  config_.validate();
  if (config_.use_embed && embedder == nullptr) {
    throw ConfigError("embedding term enabled but no embedder supplied");
  }
  for (const LayeredImageMetric* m : metrics) {
    if (m == nullptr) throw ConfigError("null metric in loss context");
    const auto it = config_.layer_per_metric.find(m->name());
    if (it == config_.layer_per_metric.end()) {
      throw ConfigError(
          fmt::format("no tap configured for metric '{}'", m->name()));
    }
    taps_.push_back({m, it->second, config_.weight_for(m->name())});
    if (config_.use_xlayer) terms_.emplace_back(*m, it->second, clean);
  }
  if (config_.use_embed) embed_.emplace(*embedder, clean);
}

namespace {

void add_common_terms(LossBreakdown& out, const LossConfig& config,
                      const std::optional<EmbedTerm>& embed,
                      std::span<const Frame> delta, bool with_gradient) {
  if (config.use_embed) {
    LossValue e = embed->evaluate(delta, with_gradient);
    out.embed = e.value;
    if (with_gradient) accumulate(out.gradient, e.gradient, 1.0);
  }
  if (config.use_temporal) {
    LossValue t = temporal_loss_with_gradient(delta);
    out.temporal = t.value;
    if (with_gradient) accumulate(out.gradient, t.gradient, 1.0);
  }
  out.total = out.xlayer + out.embed + out.temporal;
}

}  // namespace

LossBreakdown LossContext::evaluate_step(std::size_t f,
                                         std::span<const Frame> delta,
                                         bool with_gradient) const {
  require_matching(clean_, delta);
  LossBreakdown out;
  if (with_gradient) out.gradient = zeros_like(delta);
  if (config_.use_xlayer) {
    if (f >= terms_.size()) {
      throw IndexError(fmt::format("metric index {} outside 0..{}", f,
                                   terms_.size()));
    }
    LossValue x = terms_[f].evaluate(delta, with_gradient);
    const double alpha = taps_[f].alpha;
    out.xlayer = alpha * x.value;
    if (with_gradient) accumulate(out.gradient, x.gradient, alpha);
  }
  add_common_terms(out, config_, embed_, delta, with_gradient);
  return out;
}

LossBreakdown LossContext::evaluate_summed(std::span<const Frame> delta,
                                           bool with_gradient) const {
  require_matching(clean_, delta);
  LossBreakdown out;
  if (with_gradient) out.gradient = zeros_like(delta);
  if (config_.use_xlayer) {
    LossValue x = multi_metric_impl(taps_, terms_, delta, with_gradient);
    out.xlayer = x.value;
    if (with_gradient) accumulate(out.gradient, x.gradient, 1.0);
  }
  add_common_terms(out, config_, embed_, delta, with_gradient);
  return out;
}

LossBreakdown total_loss(const LossContext& context,
                         std::span<const Frame> delta, bool with_gradient) {
  return context.evaluate_summed(delta, with_gradient);
}

}  // namespace ic2vqa
