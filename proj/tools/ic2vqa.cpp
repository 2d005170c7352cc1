#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ic2vqa/campaign.hpp"
#include "ic2vqa/errors.hpp"

namespace fs = std::filesystem;
using namespace ic2vqa;

namespace {

// Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error,
// 3 missing input or incomplete grid.
int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NotFoundError*>(&e) ||
      dynamic_cast<const MissingCellError*>(&e)) {
    return 3;
  }
  return 1;
}

void print_summary(const EvaluateSummary& s) {
  const CorrelationSummary& c = s.summary;
  fmt::print("axis: {}\n", to_string(c.axis));
  fmt::print("mean |PLCC|: {:.9g}\n", c.plcc_mean_abs);
  fmt::print("mean |SRCC|: {:.9g}\n", c.srcc_mean_abs);
  fmt::print("median |PLCC|: {:.9g}\n", c.plcc_median_abs);
  fmt::print("median |SRCC|: {:.9g}\n", c.srcc_median_abs);
  fmt::print("slices: {} ({} degenerate, {} skipped)\n", c.slices,
             c.degenerate_slices, c.skipped_slices);
  if (s.cells_present < s.cells_expected) {
    fmt::print("coverage: {} of {} cells\n", s.cells_present, s.cells_expected);
  }
  for (const FixedValueSummary& f : c.per_fixed_value) {
    fmt::print("  fixed {:.9g}: mean |SRCC| {:.9g}, median |SRCC| {:.9g}\n",
               f.fixed_value, f.srcc_mean_abs, f.srcc_median_abs);
  }
  fmt::print("summary: {}\n", s.summary_path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal adversarial attacks on video quality metrics"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> output;
  bool allow_partial = false;
  std::size_t max_frames = 75;
  std::size_t scale = 540;
  bool verbose = false;

  app.add_option("--config", config, "Campaign config (JSON)");
  app.add_option("--seed", seed, "Override the campaign seed");
  app.add_option("--workers", workers, "Worker threads (default: all cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--output", output,
                 fmt::format("Output root (also ${})", kOutputRootEnv));
  app.add_flag("--allow-partial", allow_partial,
               "Evaluate over the complete slices of an unfinished grid");
  app.add_option("--max-frames", max_frames, "Frames kept by prepare")
      ->capture_default_str();
  app.add_option("--scale", scale, "Target height for prepare")
      ->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* prepare = app.add_subcommand("prepare", "Trim and downscale a dataset");
  std::string dataset_dir;
  prepare->add_option("dataset_dir", dataset_dir, "Directory of Y4M files or "
                      "PNG frame directories")->required();

  auto* attack = app.add_subcommand("attack", "Run an attack campaign");
  std::optional<std::string> attack_config;
  attack->add_option("config_file", attack_config, "Campaign config (JSON)");

  auto* evaluate = app.add_subcommand("evaluate", "Correlation summary");
  std::string eval_manifest;
  std::string axis = "epsilon";
  evaluate->add_option("manifest", eval_manifest,
                       "Campaign directory or manifest.json")->required();
  evaluate->add_option("--axis", axis, "Sweep axis: epsilon or iterations")
      ->check(CLI::IsMember({"epsilon", "iterations"}))
      ->capture_default_str();

  auto* report = app.add_subcommand("report", "Numeric report data and plots");
  std::string kind;
  std::vector<std::string> report_manifests;
  report->add_option("kind", kind, "curves, heatmap or table")
      ->required()
      ->check(CLI::IsMember({"curves", "heatmap", "table"}));
  report->add_option("manifests", report_manifests,
                     "Campaign directories or manifests; one curve series each")
      ->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  const std::optional<fs::path> output_path =
      output ? std::optional<fs::path>(*output) : std::nullopt;
  try {
    if (*prepare) {
      fs::path out_dir;
      if (output_path) {
        out_dir = *output_path;
      } else if (const char* env = std::getenv(kOutputRootEnv); env && *env) {
        out_dir = fs::path(env) / "prepared";
      } else {
        out_dir = fs::path(dataset_dir) / "prepared";
      }
      const PrepareSummary s =
          cmd_prepare(dataset_dir, out_dir, {max_frames, scale});
      fmt::print("prepared {} clip(s) into {}\n", s.written.size(),
                 out_dir.string());
      for (const auto& f : s.failures) fmt::print("failed: {}\n", f);
      return 0;
    }
    if (*attack) {
      const std::optional<std::string> path = attack_config ? attack_config : config;
      if (!path) throw ConfigError("attack needs a config file (--config)");
      const AttackSummary s = cmd_attack(fs::path(*path), {seed, workers, output_path});
      if (s.up_to_date) {
        fmt::print("up to date: {}\n", s.campaign_dir.string());
      } else {
        fmt::print("campaign {}: {} cells ({} run, {} failed)\n",
                   s.campaign_dir.string(), s.cells_total, s.cells_run,
                   s.cells_failed);
      }
      fmt::print("manifest: {}\n", s.manifest.string());
      return s.cells_failed == 0 ? 0 : 1;
    }
    if (*evaluate) {
      print_summary(
          cmd_evaluate(eval_manifest, allow_partial, parse_sweep_axis(axis)));
      return 0;
    }
    if (*report) {
      std::vector<fs::path> manifests(report_manifests.begin(),
                                      report_manifests.end());
      const ReportFiles files =
          cmd_report(manifests, parse_report_kind(kind), output_path);
      fmt::print("data: {}\n", files.data.string());
      if (!files.image.empty()) fmt::print("image: {}\n", files.image.string());
      return 0;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e);
  }
  return 0;
}
