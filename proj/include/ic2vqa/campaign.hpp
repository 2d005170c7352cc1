#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ic2vqa/attack.hpp"
#include "ic2vqa/evaluation.hpp"
#include "ic2vqa/media.hpp"
#include "ic2vqa/registry.hpp"

namespace ic2vqa {

inline constexpr const char* kOutputRootEnv = "IC2VQA_OUTPUT_ROOT";

struct SyntheticSpec {
  std::size_t count = 10;
  std::size_t frames = 75;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  std::vector<std::filesystem::path> videos;  // Y4M files or frame dirs
  std::string frame_pattern = "*.png";
  std::optional<SyntheticSpec> synthetic;
  std::size_t max_frames = 0;  // 0 keeps every frame
  std::size_t scale = 0;       // target height, 0 keeps the size
};

struct ReportSpec {
  std::string label;  // series name in curve reports
  std::vector<AdapterSpec> heatmap_controls;
  std::size_t heatmap_videos = 0;  // 0 uses every video
};

struct CampaignConfig {
  std::string name = "campaign";
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::filesystem::path output = "runs";
  DatasetSpec dataset;
  std::vector<AdapterSpec> image_metrics;
  std::optional<AdapterSpec> embedder;
  AdapterSpec vqa;
  AttackConfig attack;  // ε, I and seed are filled per cell
  std::vector<double> grid_epsilon;
  std::vector<std::size_t> grid_iterations;
  bool write_videos = true;
  ReportSpec report;
};

// Strict schema: every invalid or unknown field is collected and reported in
// one ConfigError. Relative dataset and weight paths resolve against
// `base_dir`.
CampaignConfig parse_config(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir = {});
CampaignConfig load_config(const std::filesystem::path& path);

// Normalized form; everything that influences results, without the worker
// count and output location.
nlohmann::json config_to_json(const CampaignConfig& config);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// SHA-256 over the normalized config and the content of every dataset file.
std::string config_digest(const CampaignConfig& config);

// Grid value label, ε·255 with up to 6 significant digits ("2", "0.5").
std::string epsilon_label(double epsilon);

std::string white_box_label(const CampaignConfig& config);

struct CellPaths {
  std::filesystem::path delta;
  std::filesystem::path video;
  std::filesystem::path trace;
};

CellPaths cell_paths(const std::filesystem::path& campaign_dir,
                     const EvaluationRecord& record);

// δ dump: four little-endian uint32 (N, C, H, W) then N·C·H·W float32 LE.
void write_delta(const std::filesystem::path& path, const Perturbation& delta);
struct DeltaDump {
  std::uint32_t frames = 0, channels = 0, height = 0, width = 0;
  std::vector<float> values;
};
DeltaDump read_delta(const std::filesystem::path& path);

void write_loss_trace(const std::filesystem::path& path,
                      const AttackResult& result);

std::vector<VideoClip> load_dataset(const CampaignConfig& config);

// Output root precedence: explicit override, then the environment variable,
// then the config file.
std::filesystem::path resolve_output_root(
    const CampaignConfig& config,
    const std::optional<std::filesystem::path>& override_root);

struct AttackOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> output;
};

struct AttackSummary {
  std::filesystem::path campaign_dir;
  std::filesystem::path manifest;
  std::string digest;
  bool up_to_date = false;
  std::size_t cells_total = 0;
  std::size_t cells_run = 0;
  std::size_t cells_failed = 0;
  EvaluationTable table;
};

AttackSummary cmd_attack(const std::filesystem::path& config_path,
                         const AttackOptions& options = {});
AttackSummary cmd_attack(const CampaignConfig& config,
                         const AttackOptions& options = {});

// Accepts a campaign directory or its manifest.json.
std::filesystem::path resolve_manifest(const std::filesystem::path& path);

struct EvaluateSummary {
  CorrelationSummary summary;
  std::size_t cells_expected = 0;
  std::size_t cells_present = 0;
  std::filesystem::path summary_path;
  std::filesystem::path csv_path;
};

nlohmann::json summary_to_json(const CorrelationSummary& summary);

EvaluationTable load_campaign_table(const std::filesystem::path& manifest);

EvaluateSummary cmd_evaluate(const std::filesystem::path& manifest,
                             bool allow_partial = false,
                             SweepAxis axis = SweepAxis::kEpsilon);

struct PrepareOptions {
  std::size_t max_frames = 75;
  std::size_t scale = 540;
};

struct PrepareSummary {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> failures;
};

// Normalizes every Y4M file and frame directory directly under `input_dir`
// into `output_dir` with a JSON provenance sidecar per clip.
PrepareSummary cmd_prepare(const std::filesystem::path& input_dir,
                           const std::filesystem::path& output_dir,
                           const PrepareOptions& options = {});

enum class ReportKind { kCurves, kHeatmap, kTable };
std::string to_string(ReportKind kind);
ReportKind parse_report_kind(const std::string& text);

struct ReportFiles {
  std::filesystem::path data;   // numeric CSV, the contract
  std::filesystem::path image;  // empty when rendering failed
};

ReportFiles cmd_report(const std::vector<std::filesystem::path>& manifests,
                       ReportKind kind,
                       const std::optional<std::filesystem::path>& out_dir = {});

// Raster output for reports.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
void render_curves_png(const std::vector<Series>& series,
                       const std::filesystem::path& path);
void render_heatmap_png(const FeatureMatrix& matrix,
                        const std::filesystem::path& path);

}  // namespace ic2vqa
