#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ic2vqa/adapters.hpp"
#include "ic2vqa/attack.hpp"
#include "ic2vqa/media.hpp"

namespace ic2vqa {

struct EvaluationRecord {
  std::string video_id;
  std::string attack;
  std::string white_box_metric;
  double epsilon = 0.0;
  std::size_t iterations = 0;
  double clean_score = 0.0;
  double attacked_score = 0.0;
  std::string error;  // non-empty when the cell failed

  bool ok() const { return error.empty(); }
};

// Canonical order: video, attack, metric, ε, I.
bool record_less(const EvaluationRecord& a, const EvaluationRecord& b);

struct EvaluationTable {
  std::vector<EvaluationRecord> records;
  std::vector<double> grid_epsilon;          // ascending
  std::vector<std::size_t> grid_iterations;  // ascending

  void sort();
  // Records of one (attack, metric) pair.
  EvaluationTable select(const std::string& attack,
                         const std::string& metric) const;
  const EvaluationRecord* find(const std::string& video, double epsilon,
                               std::size_t iterations) const;
};

void write_table_csv(const EvaluationTable& table,
                     const std::filesystem::path& path);
EvaluationTable read_table_csv(const std::filesystem::path& path);

enum class SweepAxis { kEpsilon, kIterations };
std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& text);

struct CorrelationPair {
  double plcc = 0.0;  // absolute values
  double srcc = 0.0;
};

// Statistics over the slices that share one fixed value of the other axis.
struct FixedValueSummary {
  double fixed_value = 0.0;
  std::size_t slices = 0;
  double plcc_mean_abs = 0.0;
  double srcc_mean_abs = 0.0;
  double plcc_median_abs = 0.0;
  double srcc_median_abs = 0.0;
};

struct CorrelationSummary {
  SweepAxis axis = SweepAxis::kEpsilon;
  double plcc_mean_abs = 0.0;
  double srcc_mean_abs = 0.0;
  double plcc_median_abs = 0.0;
  double srcc_median_abs = 0.0;
  std::map<std::string, CorrelationPair> per_video;
  std::vector<FixedValueSummary> per_fixed_value;
  std::size_t slices = 0;
  std::size_t degenerate_slices = 0;  // constant scores, counted as 1.0
  std::size_t skipped_slices = 0;     // incomplete, only with allow_partial
};

// For every video and every fixed value of the other axis, correlates the
// attacked scores ordered along `axis` with linspace(1, 0, n), takes absolute
// values and averages over videos and fixed values. Throws MissingCellError
// naming the first incomplete cell unless `allow_partial`.
CorrelationSummary correlation_protocol(const EvaluationTable& table,
                                        SweepAxis axis = SweepAxis::kEpsilon,
                                        bool allow_partial = false);

// Adaptive average pooling of a vector to `length` bins.
std::vector<double> adaptive_average_pool(std::span<const double> v,
                                          std::size_t length);

struct ImageTap {
  const LayeredImageMetric* metric = nullptr;
  std::size_t layer = 1;
  std::string label;
};

struct FeatureMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<double>> values;  // [row][col], in [-100, 100]
};

// Spatially pooled tap activations averaged over the clip's frames.
std::vector<double> pooled_clip_features(const LayeredImageMetric& metric,
                                         std::size_t layer,
                                         const VideoClip& clip);

// Entry (p, q) = 100 × mean over videos of cos(video tap p, image tap q).
FeatureMatrix feature_correlation_matrix(const VideoQualityMetric& vqa,
                                         std::span<const std::size_t> vqa_taps,
                                         std::span<const ImageTap> image_taps,
                                         std::span<const VideoClip> videos);

// ---------------------------------------------------------------------------
// Grid execution

// One attack instance per worker; owns whatever adapters it needs.
class CellAttack {
 public:
  virtual ~CellAttack() = default;
  virtual AttackResult run(const VideoClip& clip, double epsilon,
                           std::size_t iterations, std::uint64_t seed,
                           VideoQualityMetric& vqa) = 0;
};

using AttackBuilder = std::function<std::unique_ptr<CellAttack>()>;
using VqaFactory = std::function<std::unique_ptr<VideoQualityMetric>()>;

struct CellOutcome {
  EvaluationRecord record;
  AttackResult result;
  VideoClip attacked;
};

// seed ⊕ hash(video_id, ε, I).
std::uint64_t cell_seed(std::uint64_t seed, const std::string& video_id,
                        double epsilon, std::size_t iterations);

// Line-delimited JSON record log. Appends are serialized by one mutex; a
// truncated trailing line from an interrupted run is ignored on load.
class RecordStore {
 public:
  explicit RecordStore(std::filesystem::path path);
  std::vector<EvaluationRecord> load() const;
  void append(const EvaluationRecord& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

struct GridOptions {
  std::vector<double> grid_epsilon;
  std::vector<std::size_t> grid_iterations;
  std::string attack_name;
  std::string metric_name;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // When set, completed cells are appended here and cells already present
  // are not re-run.
  std::optional<std::filesystem::path> record_log;
  // Called from worker threads, serialized by the runner.
  std::function<void(const CellOutcome&)> on_cell_done;
};

// One attack run per (video, ε, I) cell; the attacked score is
// score_video(x + δ). Per-cell failures become records with an error.
EvaluationTable run_grid(std::span<const VideoClip> videos,
                         const AttackBuilder& attack, const VqaFactory& vqa,
                         const GridOptions& options);

}  // namespace ic2vqa
