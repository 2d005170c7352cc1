#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ic2vqa/adapters.hpp"
#include "ic2vqa/losses.hpp"
#include "ic2vqa/media.hpp"

namespace ic2vqa {

enum class AttackKind { kIc2vqa, kPgd, kSquare, kNoise };
enum class MultiMetricMode { kSequential, kSummed };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);
std::string to_string(MultiMetricMode mode);
MultiMetricMode parse_multi_metric_mode(const std::string& text);

// Additive perturbation δ with an L∞ budget ε.
struct Perturbation {
  std::vector<Frame> data;
  double epsilon = 0.0;

  double max_abs() const { return ic2vqa::max_abs(data); }
};

struct AttackConfig {
  AttackKind kind = AttackKind::kIc2vqa;
  double epsilon = 10.0 / 255.0;
  std::size_t iterations = 10;
  double step_size = 0.01;  // Adam learning rate
  LossConfig loss;
  MultiMetricMode multi_metric = MultiMetricMode::kSequential;
  std::uint64_t seed = 0;
  bool clamp_range = true;
  std::size_t query_budget = 300;  // square attack only
  double square_p_init = 0.05;     // initial fraction of pixels per square

  // ε ∈ [0,1], step_size > 0, p_init ∈ (0,1]; throws ConfigError.
  void validate() const;
};

struct LossTraceEntry {
  std::size_t iteration = 0;
  std::size_t metric = 0;  // inner step index; F for the summed form
  double xlayer = 0.0;
  double embed = 0.0;
  double temporal = 0.0;
  double total = 0.0;
};

struct AttackResult {
  Perturbation delta;
  std::vector<LossTraceEntry> loss_trace;
  // ic2vqa: loss at δ_final; empty trace entries for other attacks.
  std::optional<LossTraceEntry> final_loss;
  // pgd: mean white-box score before each step and at the end;
  // square: best VQA score after every query.
  std::vector<double> score_trace;
  std::size_t queries_used = 0;
  double wall_time = 0.0;
};

// Called with δ after every projection.
using StepObserver = std::function<void(const Perturbation&)>;

// Every element exactly 1/255.
Perturbation init_perturbation(std::span<const Frame> shape_like,
                               double epsilon);

// δ ← clip(δ, −ε, ε); with clamp_range also δ ← clamp_unit(x + δ) − x,
// written so that x + δ stays in [0,1] and ‖δ‖∞ ≤ ε without rounding slack.
void project(Perturbation& delta, std::span<const Frame> x, bool clamp_range);

// x + δ, clamped to [0,1].
VideoClip apply_perturbation(const VideoClip& x, const Perturbation& delta);

// Minimal Adam over a list of frames. State is allocated on the first step.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // params ← params − lr · m̂ / (√v̂ + eps)
  void step(std::vector<Frame>& params, const std::vector<Frame>& grad);
  std::size_t steps() const { return t_; }
  bool has_state() const { return !m_.empty(); }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Frame> m_, v_;
};

// The consistent attack: for every outer iteration and every metric f, one
// Adam step on α_f·L_xlayer(f) (+ embedding and temporal terms), followed by
// projection. With MultiMetricMode::kSummed, one step per iteration on the
// weighted multi-metric loss instead.
AttackResult run_ic2vqa(const AttackConfig& config, const VideoClip& x,
                        std::span<const LayeredImageMetric* const> metrics,
                        const EmbeddingModel* embedder,
                        const StepObserver& observer = {});

// Frame-wise sign-gradient ascent on the white-box score, step ε/I.
AttackResult run_pgd(const AttackConfig& config, const VideoClip& x,
                     const LayeredImageMetric& metric,
                     const StepObserver& observer = {});

// Random-search square attack on the black-box video score. Squares are drawn
// independently per frame from one RNG stream and the square size follows the
// usual piecewise schedule over the query budget.
AttackResult run_square(const AttackConfig& config, const VideoClip& x,
                        VideoQualityMetric& vqa, std::size_t query_budget,
                        const StepObserver& observer = {});

// Baseline: i.i.d. uniform noise in [−ε, ε], projected.
AttackResult run_noise(const AttackConfig& config, const VideoClip& x,
                       const StepObserver& observer = {});

// Fraction of pixels covered by a square at query `it` of `budget`.
double square_fraction(double p_init, std::size_t it, std::size_t budget);

}  // namespace ic2vqa
