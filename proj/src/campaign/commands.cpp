#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ic2vqa/campaign.hpp"
#include "ic2vqa/errors.hpp"
#include "ic2vqa/rng.hpp"
#include "ic2vqa/synthetic.hpp"

namespace ic2vqa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kTableName = "table.csv";
constexpr const char* kRecordsName = "records.jsonl";
constexpr const char* kSummaryName = "summary.json";

std::string now_utc() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     fmt::gmtime(std::chrono::system_clock::to_time_t(
                         std::chrono::system_clock::now())));
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("'{}' not found", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

void write_json(const fs::path& path, const json& doc) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", tmp.string()));
    out << doc.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

json adapters_json(const std::vector<AdapterSpec>& specs) {
  json list = json::array();
  for (const auto& s : specs) {
    json j{{"name", s.name}, {"seed", s.seed}, {"width", s.width},
           {"embed_dim", s.embed_dim}, {"resize_side", s.resize_side},
           {"tap", s.tap}, {"alpha", s.alpha}};
    if (s.weights) j["weights"] = s.weights->string();
    list.push_back(j);
  }
  return list;
}

json report_json(const ReportSpec& r) {
  return {{"label", r.label},
          {"heatmap_controls", adapters_json(r.heatmap_controls)},
          {"heatmap_videos", r.heatmap_videos}};
}

bool is_y4m(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".y4m";
}

VideoClip load_video(const fs::path& path, const std::string& pattern) {
  VideoClip clip = fs::is_directory(path) ? load_frame_dir(path, pattern)
                                          : load_y4m(path);
  const fs::path name = path.filename().empty() ? path.parent_path().filename()
                                                 : path.filename();
  clip.source_id =
      fs::is_directory(path) ? name.string() : fs::path(name).stem().string();
  return clip;
}

// Attack runner for one worker; owns its own copy of every adapter.
class CampaignAttack final : public CellAttack {
 public:
  explicit CampaignAttack(const CampaignConfig& config) : config_(config.attack) {
    std::set<std::string> names;
    for (const AdapterSpec& spec : config.image_metrics) {
      auto metric = make_image_metric(spec);
      if (!names.insert(metric->name()).second) {
        throw ConfigError(fmt::format(
            "image metric '{}' listed twice; give each a distinct seed",
            metric->name()));
      }
      config_.loss.layer_per_metric[metric->name()] =
          resolve_tap(metric->tap_names(), spec.tap);
      config_.loss.metric_weights[metric->name()] = spec.alpha;
      metrics_.push_back(std::move(metric));
    }
    if (config.embedder && config_.loss.use_embed) {
      embedder_ = make_embedding_model(*config.embedder);
    }
  }

  AttackResult run(const VideoClip& clip, double epsilon,
                   std::size_t iterations, std::uint64_t seed,
                   VideoQualityMetric& vqa) override {
    AttackConfig cfg = config_;
    cfg.epsilon = epsilon;
    cfg.iterations = iterations;
    cfg.seed = seed;
    switch (cfg.kind) {
      case AttackKind::kIc2vqa: {
        std::vector<const LayeredImageMetric*> metrics;
        for (const auto& m : metrics_) metrics.push_back(m.get());
        return run_ic2vqa(cfg, clip, metrics, embedder_.get());
      }
      case AttackKind::kPgd:
        return run_pgd(cfg, clip, *metrics_.front());
      case AttackKind::kSquare:
        return run_square(cfg, clip, vqa, cfg.query_budget);
      case AttackKind::kNoise:
        return run_noise(cfg, clip);
    }
    throw ConfigError("unhandled attack kind");
  }

 private:
  AttackConfig config_;
  std::vector<std::unique_ptr<LayeredImageMetric>> metrics_;
  std::unique_ptr<EmbeddingModel> embedder_;
};

struct LoadedManifest {
  fs::path path;
  fs::path dir;
  json doc;
  CampaignConfig config;
};

LoadedManifest load_manifest(const fs::path& p) {
  LoadedManifest m;
  m.path = resolve_manifest(p);
  m.dir = m.path.parent_path();
  m.doc = read_json(m.path);
  if (!m.doc.contains("config")) {
    throw FormatError(fmt::format("'{}' has no config section", m.path.string()));
  }
  json cfg = m.doc.at("config");
  if (m.doc.contains("report")) cfg["report"] = m.doc.at("report");
  m.config = parse_config(cfg);
  return m;
}

std::string campaign_label(const LoadedManifest& m) {
  return m.config.report.label.empty() ? m.config.name : m.config.report.label;
}

}  // namespace

std::vector<VideoClip> load_dataset(const CampaignConfig& config) {
  std::vector<VideoClip> clips;
  for (const fs::path& p : config.dataset.videos) {
    clips.push_back(load_video(p, config.dataset.frame_pattern));
  }
  if (config.dataset.synthetic) {
    const SyntheticSpec& s = *config.dataset.synthetic;
    for (std::size_t i = 0; i < s.count; ++i) {
      clips.push_back(synthesize_clip(
          derive_seed(s.seed, fmt::format("video{}", i)), s.frames, s.height,
          s.width, fmt::format("synthetic{:03d}", i)));
    }
  }
  if (config.dataset.max_frames > 0 || config.dataset.scale > 0) {
    for (VideoClip& c : clips) {
      c = prepare_clip(c, config.dataset.max_frames, config.dataset.scale);
    }
  }
  std::set<std::string> ids;
  for (const VideoClip& c : clips) {
    validate_clip(c);
    if (!ids.insert(c.source_id).second) {
      throw ConfigError(fmt::format("two dataset entries share the id '{}'",
                                    c.source_id));
    }
  }
  return clips;
}

AttackSummary cmd_attack(const fs::path& config_path,
                         const AttackOptions& options) {
  return cmd_attack(load_config(config_path), options);
}

AttackSummary cmd_attack(const CampaignConfig& input,
                         const AttackOptions& options) {
  CampaignConfig config = input;
  if (options.seed) config.seed = *options.seed;
  if (options.workers) config.workers = *options.workers;
  const std::size_t workers =
      config.workers > 0
          ? config.workers
          : std::max(1u, std::thread::hardware_concurrency());

  AttackSummary summary;
  summary.digest = config_digest(config);
  const fs::path root = resolve_output_root(config, options.output);
  summary.campaign_dir =
      root / fmt::format("{}-{}", config.name, summary.digest.substr(0, 12));
  summary.manifest = summary.campaign_dir / kManifestName;
  summary.cells_total = 0;

  json manifest;
  if (fs::exists(summary.manifest)) {
    manifest = read_json(summary.manifest);
    if (manifest.value("config_digest", "") == summary.digest &&
        manifest.value("status", "") == "complete" &&
        fs::exists(summary.campaign_dir / kTableName)) {
      summary.up_to_date = true;
      summary.table = read_table_csv(summary.campaign_dir / kTableName);
      summary.table.grid_epsilon = config.grid_epsilon;
      summary.table.grid_iterations = config.grid_iterations;
      summary.cells_total = summary.table.records.size();
      spdlog::info("campaign {} is up to date", summary.campaign_dir.string());
      return summary;
    }
  }

  const std::vector<VideoClip> videos = load_dataset(config);
  fs::create_directories(summary.campaign_dir / "cells");

  json dataset = json::array();
  for (const VideoClip& c : videos) {
    dataset.push_back({{"id", c.source_id},
                       {"frames", c.num_frames()},
                       {"height", c.height()},
                       {"width", c.width()}});
  }
  const std::string created = manifest.is_object()
                                  ? manifest.value("created_at", now_utc())
                                  : now_utc();
  manifest = json{{"config_digest", summary.digest},
                  {"config", config_to_json(config)},
                  {"report", report_json(config.report)},
                  {"dataset", dataset},
                  {"seed", config.seed},
                  {"workers", workers},
                  {"output_dir", summary.campaign_dir.string()},
                  {"created_at", created},
                  {"updated_at", now_utc()},
                  {"status", "running"}};
  write_json(summary.manifest, manifest);

  // Probe adapter construction up front so config problems surface once.
  CampaignAttack probe(config);
  (void)make_video_metric(config.vqa);

  GridOptions grid;
  grid.grid_epsilon = config.grid_epsilon;
  grid.grid_iterations = config.grid_iterations;
  grid.attack_name = to_string(config.attack.kind);
  grid.metric_name = white_box_label(config);
  grid.seed = config.seed;
  grid.workers = workers;
  grid.record_log = summary.campaign_dir / kRecordsName;
  const fs::path dir = summary.campaign_dir;
  const bool write_videos = config.write_videos;
  std::size_t ran = 0;
  grid.on_cell_done = [&](const CellOutcome& outcome) {
    ++ran;
    const CellPaths paths = cell_paths(dir, outcome.record);
    write_delta(paths.delta, outcome.result.delta);
    write_loss_trace(paths.trace, outcome.result);
    if (write_videos) {
      fs::path tmp = paths.video;
      tmp += ".tmp";
      write_y4m(outcome.attacked, tmp);
      fs::rename(tmp, paths.video);
    }
  };

  summary.table = run_grid(
      videos, [&] { return std::make_unique<CampaignAttack>(config); },
      [&] { return make_video_metric(config.vqa); }, grid);
  write_table_csv(summary.table, dir / kTableName);

  summary.cells_total = summary.table.records.size();
  summary.cells_run = ran;
  summary.cells_failed = static_cast<std::size_t>(
      std::count_if(summary.table.records.begin(), summary.table.records.end(),
                    [](const EvaluationRecord& r) { return !r.ok(); }));
  manifest["updated_at"] = now_utc();
  manifest["status"] = summary.cells_failed == 0 ? "complete" : "partial";
  manifest["cells_total"] = summary.cells_total;
  manifest["cells_failed"] = summary.cells_failed;
  write_json(summary.manifest, manifest);
  return summary;
}

fs::path resolve_manifest(const fs::path& path) {
  const fs::path p = fs::is_directory(path) ? path / kManifestName : path;
  if (!fs::exists(p)) {
    throw NotFoundError(fmt::format("manifest '{}' not found", p.string()));
  }
  return p;
}

EvaluationTable load_campaign_table(const fs::path& manifest_path) {
  const LoadedManifest m = load_manifest(manifest_path);
  EvaluationTable table;
  const fs::path csv = m.dir / kTableName;
  const fs::path log = m.dir / kRecordsName;
  if (fs::exists(csv)) {
    table = read_table_csv(csv);
  } else if (fs::exists(log)) {
    RecordStore store(log);
    table.records = store.load();
  }
  if (table.records.empty()) {
    throw NotFoundError(fmt::format("campaign '{}' has no evaluation records",
                                    m.dir.string()));
  }
  table.grid_epsilon = m.config.grid_epsilon;
  table.grid_iterations = m.config.grid_iterations;
  table.sort();
  return table;
}

json summary_to_json(const CorrelationSummary& s) {
  json per_video = json::object();
  for (const auto& [video, pair] : s.per_video) {
    per_video[video] = {{"plcc_abs", pair.plcc}, {"srcc_abs", pair.srcc}};
  }
  json fixed = json::array();
  for (const FixedValueSummary& f : s.per_fixed_value) {
    fixed.push_back({{"fixed_value", f.fixed_value},
                     {"slices", f.slices},
                     {"plcc_mean_abs", f.plcc_mean_abs},
                     {"srcc_mean_abs", f.srcc_mean_abs},
                     {"plcc_median_abs", f.plcc_median_abs},
                     {"srcc_median_abs", f.srcc_median_abs}});
  }
  return {{"axis", to_string(s.axis)},
          {"plcc_mean_abs", s.plcc_mean_abs},
          {"srcc_mean_abs", s.srcc_mean_abs},
          {"plcc_median_abs", s.plcc_median_abs},
          {"srcc_median_abs", s.srcc_median_abs},
          {"slices", s.slices},
          {"degenerate_slices", s.degenerate_slices},
          {"skipped_slices", s.skipped_slices},
          {"per_video", per_video},
          {"per_fixed_value", fixed}};
}

EvaluateSummary cmd_evaluate(const fs::path& manifest, bool allow_partial,
                             SweepAxis axis) {
  const fs::path path = resolve_manifest(manifest);
  const fs::path dir = path.parent_path();
  EvaluationTable table = load_campaign_table(path);

  EvaluateSummary out;
  std::set<std::string> videos;
  for (const auto& r : table.records) videos.insert(r.video_id);
  out.cells_expected =
      videos.size() * table.grid_epsilon.size() * table.grid_iterations.size();
  out.cells_present = static_cast<std::size_t>(std::count_if(
      table.records.begin(), table.records.end(),
      [](const EvaluationRecord& r) { return r.ok(); }));
  out.summary = correlation_protocol(table, axis, allow_partial);

  json doc = summary_to_json(out.summary);
  doc["cells_expected"] = out.cells_expected;
  doc["cells_present"] = out.cells_present;
  if (out.cells_present < out.cells_expected) {
    doc["coverage_note"] =
        fmt::format("{} of {} cells available; {} slices skipped",
                    out.cells_present, out.cells_expected,
                    out.summary.skipped_slices);
  }
  out.summary_path =
      dir / (axis == SweepAxis::kEpsilon
                 ? std::string(kSummaryName)
                 : fmt::format("summary_{}.json", to_string(axis)));
  write_json(out.summary_path, doc);
  out.csv_path = dir / kTableName;
  if (!fs::exists(out.csv_path)) write_table_csv(table, out.csv_path);
  return out;
}

PrepareSummary cmd_prepare(const fs::path& input_dir, const fs::path& output_dir,
                           const PrepareOptions& options) {
  if (!fs::is_directory(input_dir)) {
    throw NotFoundError(
        fmt::format("dataset directory '{}' not found", input_dir.string()));
  }
  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(input_dir)) {
    if (e.is_regular_file() && is_y4m(e.path())) {
      inputs.push_back(e.path());
    } else if (e.is_directory()) {
      const bool has_frames = std::any_of(
          fs::directory_iterator(e.path()), fs::directory_iterator(),
          [](const fs::directory_entry& f) {
            return f.is_regular_file() && f.path().extension() == ".png";
          });
      if (has_frames) inputs.push_back(e.path());
    }
  }
  if (inputs.empty()) {
    throw NotFoundError(fmt::format("no inputs (Y4M files or PNG frame "
                                    "directories) in '{}'",
                                    input_dir.string()));
  }
  std::sort(inputs.begin(), inputs.end(), [](const fs::path& a, const fs::path& b) {
    return natural_less(a.filename().string(), b.filename().string());
  });
  fs::create_directories(output_dir);

  PrepareSummary summary;
  for (const fs::path& in : inputs) {
    try {
      const bool dir_input = fs::is_directory(in);
      const std::string stem =
          dir_input ? in.filename().string() : in.stem().string();
      const VideoClip clip = load_video(in, "*.png");
      const VideoClip prepared =
          prepare_clip(clip, options.max_frames, options.scale);
      const fs::path out = output_dir / (stem + ".y4m");
      if (fs::exists(out) && fs::equivalent(out, in)) {
        throw ConfigError("output would overwrite its own input");
      }
      // A Y4M that needs no trimming or scaling is copied verbatim so that
      // re-running over prepared clips is byte-stable.
      const bool unchanged = !dir_input &&
                             prepared.num_frames() == clip.num_frames() &&
                             prepared.height() == clip.height() &&
                             prepared.width() == clip.width();
      if (unchanged) {
        fs::copy_file(in, out, fs::copy_options::overwrite_existing);
      } else {
        write_y4m(prepared, out);
      }
      json provenance{{"source", fs::absolute(in).lexically_normal().string()},
                      {"source_frames", clip.num_frames()},
                      {"source_height", clip.height()},
                      {"source_width", clip.width()},
                      {"frames", prepared.num_frames()},
                      {"height", prepared.height()},
                      {"width", prepared.width()},
                      {"max_frames", options.max_frames},
                      {"scale", options.scale},
                      {"copied", unchanged}};
      if (!dir_input) provenance["source_sha256"] = sha256_file(in);
      write_json(output_dir / (stem + ".json"), provenance);
      summary.written.push_back(out);
      spdlog::info("prepared {} -> {} ({}x{}, {} frames)", in.string(),
                   out.string(), prepared.width(), prepared.height(),
                   prepared.num_frames());
    } catch (const std::exception& e) {
      summary.failures.push_back(fmt::format("{}: {}", in.string(), e.what()));
      spdlog::error("skipping {}: {}", in.string(), e.what());
    }
  }
  if (summary.written.empty()) {
    throw Error(fmt::format("all {} inputs failed to prepare", inputs.size()));
  }
  return summary;
}

std::string to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::kCurves:
      return "curves";
    case ReportKind::kHeatmap:
      return "heatmap";
    case ReportKind::kTable:
      return "table";
  }
  return "";
}

ReportKind parse_report_kind(const std::string& text) {
  if (text == "curves") return ReportKind::kCurves;
  if (text == "heatmap") return ReportKind::kHeatmap;
  if (text == "table") return ReportKind::kTable;
  throw ConfigError(
      fmt::format("unknown report kind '{}' (curves, heatmap, table)", text));
}

ReportFiles cmd_report(const std::vector<fs::path>& manifests, ReportKind kind,
                       const std::optional<fs::path>& out_dir) {
  if (manifests.empty()) throw NotFoundError("no campaign given");
  std::vector<LoadedManifest> loaded;
  for (const auto& m : manifests) loaded.push_back(load_manifest(m));
  const fs::path dir = out_dir ? *out_dir : loaded.front().dir / "reports";
  fs::create_directories(dir);

  ReportFiles files;
  auto render = [&](const fs::path& image, const auto& draw) {
    try {
      draw();
      files.image = image;
    } catch (const std::exception& e) {
      spdlog::warn("plot rendering skipped: {}", e.what());
    }
  };

  switch (kind) {
    case ReportKind::kTable: {
      std::string csv =
          "campaign,attack,white_box_metric,vqa,plcc_mean_abs,srcc_mean_abs,"
          "slices,degenerate_slices\n";
      for (const LoadedManifest& m : loaded) {
        const EvaluationTable table = load_campaign_table(m.path);
        const CorrelationSummary s = correlation_protocol(table);
        const EvaluationRecord& first = table.records.front();
        csv += fmt::format("{},{},{},{}-s{},{:.9g},{:.9g},{},{}\n",
                           campaign_label(m), first.attack,
                           first.white_box_metric, m.config.vqa.name,
                           m.config.vqa.seed, s.plcc_mean_abs, s.srcc_mean_abs,
                           s.slices, s.degenerate_slices);
      }
      files.data = dir / "table.csv";
      std::ofstream(files.data) << csv;
      break;
    }
    case ReportKind::kCurves: {
      std::string csv = "series,iterations,srcc_median_abs,plcc_median_abs\n";
      std::vector<Series> series;
      for (const LoadedManifest& m : loaded) {
        const EvaluationTable table = load_campaign_table(m.path);
        const CorrelationSummary s =
            correlation_protocol(table, SweepAxis::kEpsilon);
        Series line{campaign_label(m), {}, {}};
        for (const FixedValueSummary& f : s.per_fixed_value) {
          csv += fmt::format("{},{:.9g},{:.9g},{:.9g}\n", line.label,
                             f.fixed_value, f.srcc_median_abs,
                             f.plcc_median_abs);
          line.x.push_back(f.fixed_value);
          line.y.push_back(f.srcc_median_abs);
        }
        series.push_back(std::move(line));
      }
      files.data = dir / "curves.csv";
      std::ofstream(files.data) << csv;
      render(dir / "curves.png",
             [&] { render_curves_png(series, dir / "curves.png"); });
      break;
    }
    case ReportKind::kHeatmap: {
      const CampaignConfig& config = loaded.front().config;
      std::vector<VideoClip> videos = load_dataset(config);
      if (config.report.heatmap_videos > 0 &&
          videos.size() > config.report.heatmap_videos) {
        videos.resize(config.report.heatmap_videos);
      }
      const auto vqa = make_video_metric(config.vqa);
      std::vector<std::size_t> vqa_taps;
      for (std::size_t k = 1; k <= vqa->num_taps(); ++k) vqa_taps.push_back(k);
      std::vector<std::unique_ptr<LayeredImageMetric>> metrics;
      for (const auto& spec : config.image_metrics) {
        metrics.push_back(make_image_metric(spec));
      }
      for (const auto& spec : config.report.heatmap_controls) {
        metrics.push_back(make_image_metric(spec));
      }
      if (metrics.empty()) {
        throw NotFoundError("heatmap needs at least one image metric");
      }
      std::vector<ImageTap> taps;
      for (const auto& m : metrics) {
        const auto names = m->tap_names();
        for (std::size_t k = 1; k <= m->num_layers(); ++k) {
          // The scalar score head has no spatial features to compare.
          if (names[k - 1] == "score") continue;
          taps.push_back({m.get(), k, fmt::format("{}:{}", m->name(), names[k - 1])});
        }
      }
      const FeatureMatrix matrix =
          feature_correlation_matrix(*vqa, vqa_taps, taps, videos);
      std::string csv = "vqa_tap";
      for (const auto& c : matrix.col_labels) csv += "," + c;
      csv += "\n";
      for (std::size_t r = 0; r < matrix.values.size(); ++r) {
        csv += matrix.row_labels[r];
        for (double v : matrix.values[r]) csv += fmt::format(",{:.9g}", v);
        csv += "\n";
      }
      files.data = dir / "heatmap.csv";
      std::ofstream(files.data) << csv;
      render(dir / "heatmap.png",
             [&] { render_heatmap_png(matrix, dir / "heatmap.png"); });
      break;
    }
  }
  return files;
}

}  // namespace ic2vqa
