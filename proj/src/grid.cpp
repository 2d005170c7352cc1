#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include <fmt/format.h>
#include "json.hpp"
#include <spdlog/spdlog.h>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/evaluation.hpp"
#include "ic2vqa/rng.hpp"

namespace ic2vqa {

namespace {

nlohmann::json to_json(const EvaluationRecord& r) {
  nlohmann::json j = {{"video_id", r.video_id},
                      {"attack", r.attack},
                      {"metric", r.white_box_metric},
                      {"epsilon", r.epsilon},
                      {"iterations", r.iterations}};
  auto finite_or_null = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  j["clean_score"] = finite_or_null(r.clean_score);
  j["attacked_score"] = finite_or_null(r.attacked_score);
  if (!r.ok()) j["error"] = r.error;
  return j;
}

EvaluationRecord from_json(const nlohmann::json& j) {
  EvaluationRecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.attack = j.at("attack").get<std::string>();
  r.white_box_metric = j.at("metric").get<std::string>();
  r.epsilon = j.at("epsilon").get<double>();
  r.iterations = j.at("iterations").get<std::size_t>();
  auto number = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                       : v.get<double>();
  };
  r.clean_score = number(j.at("clean_score"));
  r.attacked_score = number(j.at("attacked_score"));
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

std::string cell_key(const std::string& video, const std::string& attack,
                     const std::string& metric, double epsilon,
                     std::size_t iterations) {
  return fmt::format("{}|{}|{}|{:.17g}|{}", video, attack, metric, epsilon,
                     iterations);
}

std::string cell_key(const EvaluationRecord& r) {
  return cell_key(r.video_id, r.attack, r.white_box_metric, r.epsilon,
                  r.iterations);
}

}  // namespace

std::uint64_t cell_seed(std::uint64_t seed, const std::string& video_id,
                        double epsilon, std::size_t iterations) {
  return seed ^ splitmix64(fnv1a64(
                    fmt::format("{}|{:.17g}|{}", video_id, epsilon, iterations)));
}

RecordStore::RecordStore(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<EvaluationRecord> RecordStore::load() const {
  std::vector<EvaluationRecord> records;
  std::ifstream in(path_);
  if (!in) return records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      // An interrupted writer can leave a partial last line.
      if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(fmt::format("{}:{}: malformed record",
                                      path_.string(), line_no));
      }
      spdlog::warn("{}: ignoring truncated trailing record", path_.string());
    }
  }
  return records;
}

void RecordStore::append(const EvaluationRecord& record) {
  std::lock_guard lock(mutex_);
  // Drop a partial line left by an interrupted run; otherwise it would end
  // up in the middle of the log and make it unreadable.
  {
    std::ifstream in(path_, std::ios::binary);
    if (in) {
      const std::string text{std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>()};
      if (!text.empty() && text.back() != '\n') {
        const auto keep = text.find_last_of('\n');
        in.close();
        std::filesystem::resize_file(
            path_, keep == std::string::npos ? 0 : keep + 1);
      }
    }
  }
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError(fmt::format("cannot append to '{}'", path_.string()));
  out << to_json(record).dump() << '\n';
  out.flush();
}

EvaluationTable run_grid(std::span<const VideoClip> videos,
                         const AttackBuilder& attack, const VqaFactory& vqa,
                         const GridOptions& options) {
  if (options.grid_epsilon.empty() || options.grid_iterations.empty()) {
    throw ConfigError("grids must be non-empty");
  }
  for (double eps : options.grid_epsilon) {
    if (!(eps >= 0.0 && eps <= 1.0)) {
      throw ConfigError(fmt::format("epsilon {} outside [0,1]", eps));
    }
  }

  std::optional<RecordStore> store;
  std::map<std::string, EvaluationRecord> done;
  if (options.record_log) {
    store.emplace(*options.record_log);
    for (auto& r : store->load()) {
      if (r.ok()) {
        done[cell_key(r)] = std::move(r);
      } else {
        done.erase(cell_key(r));
      }
    }
  }

  struct Job {
    std::size_t video;
    double epsilon;
    std::size_t iterations;
  };
  std::vector<Job> jobs;
  std::vector<EvaluationRecord> reused;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (double eps : options.grid_epsilon) {
      for (std::size_t iters : options.grid_iterations) {
        const auto key = cell_key(videos[v].source_id, options.attack_name,
                                  options.metric_name, eps, iters);
        if (auto it = done.find(key); it != done.end()) {
          reused.push_back(it->second);
        } else {
          jobs.push_back({v, eps, iters});
        }
      }
    }
  }
  if (!reused.empty()) {
    spdlog::info("grid: {} of {} cells already complete", reused.size(),
                 reused.size() + jobs.size());
  }

  std::vector<EvaluationRecord> fresh(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  auto worker = [&]() {
    std::unique_ptr<CellAttack> runner;
    std::unique_ptr<VideoQualityMetric> scorer;
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      const VideoClip& clip = videos[job.video];
      EvaluationRecord record;
      record.video_id = clip.source_id;
      record.attack = options.attack_name;
      record.white_box_metric = options.metric_name;
      record.epsilon = job.epsilon;
      record.iterations = job.iterations;
      CellOutcome outcome;
      try {
        if (!runner) runner = attack();
        if (!scorer) scorer = vqa();
        const auto seed =
            cell_seed(options.seed, clip.source_id, job.epsilon, job.iterations);
        outcome.result = runner->run(clip, job.epsilon, job.iterations, seed,
                                     *scorer);
        outcome.attacked = apply_perturbation(clip, outcome.result.delta);
        record.clean_score = scorer->score_video(clip);
        record.attacked_score = scorer->score_video(outcome.attacked);
      } catch (const std::exception& e) {
        record.clean_score = std::numeric_limits<double>::quiet_NaN();
        record.attacked_score = std::numeric_limits<double>::quiet_NaN();
        record.error = e.what();
        spdlog::error("cell {} eps={:.6g} I={} failed: {}", clip.source_id,
                      job.epsilon, job.iterations, e.what());
      }
      outcome.record = record;
      {
        std::lock_guard lock(callback_mutex);
        if (record.ok() && options.on_cell_done) {
          try {
            options.on_cell_done(outcome);
          } catch (const std::exception& e) {
            record.error = fmt::format("writing cell artifacts: {}", e.what());
            spdlog::error("cell {}: {}", clip.source_id, record.error);
          }
        }
        if (store) store->append(record);
      }
      fresh[j] = std::move(record);
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(options.workers, jobs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  EvaluationTable table;
  table.grid_epsilon = options.grid_epsilon;
  table.grid_iterations = options.grid_iterations;
  table.records = std::move(reused);
  for (auto& r : fresh) table.records.push_back(std::move(r));
  table.sort();
  return table;
}

}  // namespace ic2vqa
