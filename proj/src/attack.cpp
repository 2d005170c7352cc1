#include "ic2vqa/attack.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/rng.hpp"

namespace ic2vqa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_same_shape(std::span<const Frame> x, const Perturbation& delta) {
  if (x.size() != delta.data.size()) {
    throw ShapeError(fmt::format("clip has {} frames but perturbation has {}",
                                 x.size(), delta.data.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x[i].same_shape(delta.data[i])) {
      throw ShapeError(fmt::format("frame {}: clip {} vs perturbation {}", i,
                                   x[i].shape_string(),
                                   delta.data[i].shape_string()));
    }
  }
}

void notify(const StepObserver& observer, const Perturbation& delta) {
  if (observer) observer(delta);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Perturbation zero_perturbation(std::span<const Frame> x, double epsilon) {
  Perturbation delta;
  delta.epsilon = epsilon;
  for (const Frame& f : x) delta.data.emplace_back(f.channels(), f.height(), f.width());
  return delta;
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kIc2vqa:
      return "ic2vqa";
    case AttackKind::kPgd:
      return "pgd";
    case AttackKind::kSquare:
      return "square";
    case AttackKind::kNoise:
      return "noise";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& text) {
  if (text == "ic2vqa") return AttackKind::kIc2vqa;
  if (text == "pgd") return AttackKind::kPgd;
  if (text == "square") return AttackKind::kSquare;
  if (text == "noise") return AttackKind::kNoise;
  throw ConfigError(fmt::format(
      "unknown attack kind '{}' (expected ic2vqa, pgd, square or noise)", text));
}

std::string to_string(MultiMetricMode mode) {
  return mode == MultiMetricMode::kSequential ? "sequential" : "summed";
}

MultiMetricMode parse_multi_metric_mode(const std::string& text) {
  if (text == "sequential") return MultiMetricMode::kSequential;
  if (text == "summed") return MultiMetricMode::kSummed;
  throw ConfigError(fmt::format(
      "unknown multi-metric mode '{}' (expected sequential or summed)", text));
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError(fmt::format("epsilon {} outside [0,1]", epsilon));
  }
  if (!(step_size > 0.0)) {
    throw ConfigError(fmt::format("step_size {} must be positive", step_size));
  }
  if (!(square_p_init > 0.0 && square_p_init <= 1.0)) {
    throw ConfigError(
        fmt::format("square p_init {} outside (0,1]", square_p_init));
  }
  if (kind == AttackKind::kIc2vqa) loss.validate();
}

Perturbation init_perturbation(std::span<const Frame> shape_like,
                               double epsilon) {
  Perturbation delta;
  delta.epsilon = epsilon;
  delta.data.reserve(shape_like.size());
  for (const Frame& f : shape_like) {
    delta.data.emplace_back(f.channels(), f.height(), f.width(), 1.0 / 255.0);
  }
  return delta;
}

void project(Perturbation& delta, std::span<const Frame> x, bool clamp_range) {
  require_same_shape(x, delta);
  const double eps = delta.epsilon;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto d = delta.data[i].values();
    const auto xv = x[i].values();
    for (std::size_t j = 0; j < d.size(); ++j) {
      double v = std::clamp(d[j], -eps, eps);
      if (clamp_range) {
        const double sum = xv[j] + v;
        if (sum > 1.0) {
          v = 1.0 - xv[j];
        } else if (sum < 0.0) {
          v = -xv[j];
        }
      }
      d[j] = v;
    }
  }
}

VideoClip apply_perturbation(const VideoClip& x, const Perturbation& delta) {
  require_same_shape(x.frames, delta);
  VideoClip out;
  out.frame_rate = x.frame_rate;
  out.source_id = x.source_id;
  out.frames.reserve(x.frames.size());
  for (std::size_t i = 0; i < x.frames.size(); ++i) {
    out.frames.push_back(clamp_unit(x.frames[i] + delta.data[i]));
  }
  return out;
}

void Adam::step(std::vector<Frame>& params, const std::vector<Frame>& grad) {
  if (params.size() != grad.size()) {
    throw ShapeError("Adam: parameter and gradient counts differ");
  }
  if (m_.empty()) {
    for (const Frame& p : params) {
      m_.emplace_back(p.channels(), p.height(), p.width());
      v_.emplace_back(p.channels(), p.height(), p.width());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    const auto g = grad[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------

AttackResult run_ic2vqa(const AttackConfig& config, const VideoClip& x,
                        std::span<const LayeredImageMetric* const> metrics,
                        const EmbeddingModel* embedder,
                        const StepObserver& observer) {
  const auto start = Clock::now();
  config.validate();
  if (metrics.empty()) {
    throw ConfigError("ic2vqa needs at least one image quality metric");
  }
  for (const LayeredImageMetric* m : metrics) {
    if (m == nullptr) throw ConfigError("null metric");
    if (!m->differentiable()) {
      throw CapabilityError(
          fmt::format("metric '{}' is not differentiable", m->name()));
    }
  }
  if (embedder != nullptr && !embedder->differentiable()) {
    throw CapabilityError(
        fmt::format("embedder '{}' is not differentiable", embedder->name()));
  }

  AttackResult result;
  result.delta = init_perturbation(x.frames, config.epsilon);
  project(result.delta, x.frames, config.clamp_range);
  notify(observer, result.delta);
  if (config.iterations == 0) {
    result.wall_time = seconds_since(start);
    return result;
  }

  const LossContext context(
      config.loss, {metrics.begin(), metrics.end()},
      config.loss.use_embed ? embedder : nullptr, x.frames);
  Adam adam(config.step_size);
  const std::size_t num_metrics = metrics.size();

  auto take_step = [&](std::size_t iteration, std::size_t f,
                       const LossBreakdown& loss) {
    result.loss_trace.push_back({iteration, f, loss.xlayer, loss.embed,
                                 loss.temporal, loss.total});
    adam.step(result.delta.data, loss.gradient);
    project(result.delta, x.frames, config.clamp_range);
    notify(observer, result.delta);
  };

  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (config.multi_metric == MultiMetricMode::kSequential) {
      for (std::size_t f = 0; f < num_metrics; ++f) {
        take_step(it, f, context.evaluate_step(f, result.delta.data, true));
      }
    } else {
      take_step(it, num_metrics,
                context.evaluate_summed(result.delta.data, true));
    }
  }
  const LossBreakdown final_loss =
      context.evaluate_summed(result.delta.data, false);
  result.final_loss = LossTraceEntry{config.iterations,     num_metrics,
                                     final_loss.xlayer,     final_loss.embed,
                                     final_loss.temporal,   final_loss.total};
  result.wall_time = seconds_since(start);
  return result;
}

AttackResult run_pgd(const AttackConfig& config, const VideoClip& x,
                     const LayeredImageMetric& metric,
                     const StepObserver& observer) {
  const auto start = Clock::now();
  config.validate();
  if (!metric.differentiable()) {
    throw CapabilityError(
        fmt::format("metric '{}' is not differentiable", metric.name()));
  }
  AttackResult result;
  result.delta = zero_perturbation(x.frames, config.epsilon);
  notify(observer, result.delta);
  if (config.iterations == 0) {
    result.wall_time = seconds_since(start);
    return result;
  }
  const double step = config.epsilon / static_cast<double>(config.iterations);
  const double inv_n = 1.0 / static_cast<double>(x.frames.size());
  const double upstream = 1.0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    double mean_score = 0.0;
    for (std::size_t i = 0; i < x.frames.size(); ++i) {
      Pullback p = metric.score_with_pullback(x.frames[i] + result.delta.data[i]);
      mean_score += p.value[0] * inv_n;
      const Frame g = p.pullback(std::span(&upstream, 1));
      auto d = result.delta.data[i].values();
      const auto gv = g.values();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += step * sign(gv[j]);
    }
    result.score_trace.push_back(mean_score);
    project(result.delta, x.frames, config.clamp_range);
    notify(observer, result.delta);
  }
  double final_score = 0.0;
  for (std::size_t i = 0; i < x.frames.size(); ++i) {
    final_score +=
        metric.score_image(x.frames[i] + result.delta.data[i]) * inv_n;
  }
  result.score_trace.push_back(final_score);
  result.wall_time = seconds_since(start);
  return result;
}

double square_fraction(double p_init, std::size_t it, std::size_t budget) {
  if (budget == 0) return p_init;
  const auto scaled = static_cast<std::size_t>(
      static_cast<double>(it) / static_cast<double>(budget) * 10000.0);
  static constexpr std::array<std::size_t, 9> kBounds{
      50, 200, 500, 1000, 2000, 4000, 6000, 8000, 10000};
  if (scaled <= 10) return p_init;
  double p = p_init / 2.0;
  for (std::size_t bound : kBounds) {
    if (scaled <= bound) return p;
    p /= 2.0;
  }
  return p_init;
}

AttackResult run_square(const AttackConfig& config, const VideoClip& x,
                        VideoQualityMetric& vqa, std::size_t query_budget,
                        const StepObserver& observer) {
  const auto start = Clock::now();
  config.validate();
  Rng rng(config.seed);
  const double eps = config.epsilon;

  // Vertical stripes of ±ε per channel and column.
  AttackResult result;
  result.delta = zero_perturbation(x.frames, eps);
  for (Frame& d : result.delta.data) {
    for (std::size_t c = 0; c < d.channels(); ++c) {
      for (std::size_t col = 0; col < d.width(); ++col) {
        const double v = eps * rng.sign();
        for (std::size_t row = 0; row < d.height(); ++row) d.at(c, row, col) = v;
      }
    }
  }
  project(result.delta, x.frames, config.clamp_range);
  notify(observer, result.delta);
  if (query_budget == 0) {
    result.wall_time = seconds_since(start);
    return result;
  }

  double best = vqa.score_video(apply_perturbation(x, result.delta));
  result.queries_used = 1;
  result.score_trace.push_back(best);

  const std::size_t h = x.height();
  const std::size_t w = x.width();
  while (result.queries_used < query_budget) {
    const double p =
        square_fraction(config.square_p_init, result.queries_used, query_budget);
    const auto side = static_cast<std::size_t>(std::clamp<double>(
        std::round(std::sqrt(p * static_cast<double>(h * w))), 1.0,
        static_cast<double>(std::min(h, w))));
    Perturbation candidate = result.delta;
    for (Frame& d : candidate.data) {
      const std::size_t top = rng.below(h - side + 1);
      const std::size_t left = rng.below(w - side + 1);
      for (std::size_t c = 0; c < d.channels(); ++c) {
        const double v = eps * rng.sign();
        for (std::size_t row = top; row < top + side; ++row) {
          for (std::size_t col = left; col < left + side; ++col) {
            d.at(c, row, col) = v;
          }
        }
      }
    }
    project(candidate, x.frames, config.clamp_range);
    const double score = vqa.score_video(apply_perturbation(x, candidate));
    ++result.queries_used;
    if (score > best) {
      best = score;
      result.delta = std::move(candidate);
      notify(observer, result.delta);
    }
    result.score_trace.push_back(best);
  }
  result.wall_time = seconds_since(start);
  return result;
}

AttackResult run_noise(const AttackConfig& config, const VideoClip& x,
                       const StepObserver& observer) {
  const auto start = Clock::now();
  config.validate();
  Rng rng(config.seed);
  AttackResult result;
  result.delta = zero_perturbation(x.frames, config.epsilon);
  for (Frame& d : result.delta.data) {
    for (double& v : d.values()) v = rng.uniform(-config.epsilon, config.epsilon);
  }
  project(result.delta, x.frames, config.clamp_range);
  notify(observer, result.delta);
  result.wall_time = seconds_since(start);
  return result;
}

}  // namespace ic2vqa
