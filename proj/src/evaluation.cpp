#include "ic2vqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/losses.hpp"
#include "ic2vqa/stats.hpp"

namespace ic2vqa {

namespace {

bool same_value(double a, double b) { return std::abs(a - b) <= 1e-12; }

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

constexpr const char* kCsvHeader =
    "video_id,attack,metric,epsilon,iterations,clean_score,attacked_score,"
    "status";

}  // namespace

bool record_less(const EvaluationRecord& a, const EvaluationRecord& b) {
  return std::tie(a.video_id, a.attack, a.white_box_metric, a.epsilon,
                  a.iterations) < std::tie(b.video_id, b.attack,
                                           b.white_box_metric, b.epsilon,
                                           b.iterations);
}

void EvaluationTable::sort() {
  std::sort(records.begin(), records.end(), record_less);
  std::sort(grid_epsilon.begin(), grid_epsilon.end());
  std::sort(grid_iterations.begin(), grid_iterations.end());
}

EvaluationTable EvaluationTable::select(const std::string& attack,
                                        const std::string& metric) const {
  EvaluationTable out;
  out.grid_epsilon = grid_epsilon;
  out.grid_iterations = grid_iterations;
  for (const auto& r : records) {
    if (r.attack == attack && r.white_box_metric == metric) {
      out.records.push_back(r);
    }
  }
  return out;
}

const EvaluationRecord* EvaluationTable::find(const std::string& video,
                                              double epsilon,
                                              std::size_t iterations) const {
  for (const auto& r : records) {
    if (r.video_id == video && r.iterations == iterations &&
        same_value(r.epsilon, epsilon)) {
      return &r;
    }
  }
  return nullptr;
}

void write_table_csv(const EvaluationTable& table,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << kCsvHeader << '\n';
  for (const auto& r : table.records) {
    out << fmt::format("{},{},{},{:.17g},{},{:.17g},{:.17g},{}\n",
                       csv_quote(r.video_id), csv_quote(r.attack),
                       csv_quote(r.white_box_metric), r.epsilon, r.iterations,
                       r.clean_score, r.attacked_score,
                       r.ok() ? std::string("ok") : csv_quote(r.error));
  }
}

EvaluationTable read_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw FormatError(fmt::format("'{}' is not an evaluation table", path.string()));
  }
  EvaluationTable table;
  std::set<double> eps;
  std::set<std::size_t> iters;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv_split(line);
    if (f.size() != 8) {
      throw FormatError(fmt::format("{}:{}: expected 8 fields, got {}",
                                    path.string(), line_no, f.size()));
    }
    EvaluationRecord r;
    try {
      r.video_id = f[0];
      r.attack = f[1];
      r.white_box_metric = f[2];
      r.epsilon = std::stod(f[3]);
      r.iterations = std::stoul(f[4]);
      r.clean_score = std::stod(f[5]);
      r.attacked_score = std::stod(f[6]);
    } catch (const std::exception&) {
      throw FormatError(
          fmt::format("{}:{}: malformed number", path.string(), line_no));
    }
    if (f[7] != "ok") r.error = f[7];
    eps.insert(r.epsilon);
    iters.insert(r.iterations);
    table.records.push_back(std::move(r));
  }
  table.grid_epsilon.assign(eps.begin(), eps.end());
  table.grid_iterations.assign(iters.begin(), iters.end());
  table.sort();
  return table;
}

std::string to_string(SweepAxis axis) {
  return axis == SweepAxis::kEpsilon ? "epsilon" : "iterations";
}

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "epsilon" || text == "eps") return SweepAxis::kEpsilon;
  if (text == "iterations" || text == "iter") return SweepAxis::kIterations;
  throw ConfigError(fmt::format(
      "unknown sweep axis '{}' (expected epsilon or iterations)", text));
}

CorrelationSummary correlation_protocol(const EvaluationTable& table,
                                        SweepAxis axis, bool allow_partial) {
  std::set<std::pair<std::string, std::string>> combos;
  std::set<std::string> videos;
  for (const auto& r : table.records) {
    combos.emplace(r.attack, r.white_box_metric);
    videos.insert(r.video_id);
  }
  if (combos.size() > 1) {
    throw ConfigError(
        "table mixes several (attack, metric) pairs; select one first");
  }
  const std::size_t sweep_len = axis == SweepAxis::kEpsilon
                                    ? table.grid_epsilon.size()
                                    : table.grid_iterations.size();
  const std::size_t fixed_len = axis == SweepAxis::kEpsilon
                                    ? table.grid_iterations.size()
                                    : table.grid_epsilon.size();
  if (sweep_len < 2) {
    throw ConfigError(fmt::format(
        "sweeping {} needs at least 2 grid values, have {}", to_string(axis),
        sweep_len));
  }

  CorrelationSummary summary;
  summary.axis = axis;
  const auto reference = linearly_decreasing(sweep_len);
  std::vector<double> all_plcc, all_srcc;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      by_video;

  for (std::size_t fi = 0; fi < fixed_len; ++fi) {
    FixedValueSummary fixed;
    fixed.fixed_value = axis == SweepAxis::kEpsilon
                            ? static_cast<double>(table.grid_iterations[fi])
                            : table.grid_epsilon[fi];
    std::vector<double> plccs, srccs;
    for (const std::string& video : videos) {
      std::vector<double> scores;
      bool complete = true;
      for (std::size_t si = 0; si < sweep_len; ++si) {
        const double eps = axis == SweepAxis::kEpsilon ? table.grid_epsilon[si]
                                                       : table.grid_epsilon[fi];
        const std::size_t iters = axis == SweepAxis::kEpsilon
                                      ? table.grid_iterations[fi]
                                      : table.grid_iterations[si];
        const EvaluationRecord* r = table.find(video, eps, iters);
        if (r == nullptr || !r->ok()) {
          if (!allow_partial) {
            throw MissingCellError(fmt::format(
                "missing cell: video={} epsilon={:.9g} ({:.9g}/255) "
                "iterations={}{}",
                video, eps, eps * 255.0, iters,
                r == nullptr ? "" : " (failed: " + r->error + ")"));
          }
          complete = false;
          break;
        }
        scores.push_back(r->attacked_score);
      }
      if (!complete) {
        ++summary.skipped_slices;
        continue;
      }
      double p = 1.0;
      double s = 1.0;
      try {
        p = std::abs(pearson(scores, reference));
        s = std::abs(spearman(scores, reference));
      } catch (const UndefinedCorrelationError&) {
        p = 1.0;
        s = 1.0;
        ++summary.degenerate_slices;
      }
      plccs.push_back(p);
      srccs.push_back(s);
      by_video[video].first.push_back(p);
      by_video[video].second.push_back(s);
    }
    fixed.slices = plccs.size();
    fixed.plcc_mean_abs = mean(plccs);
    fixed.srcc_mean_abs = mean(srccs);
    fixed.plcc_median_abs = median(plccs);
    fixed.srcc_median_abs = median(srccs);
    all_plcc.insert(all_plcc.end(), plccs.begin(), plccs.end());
    all_srcc.insert(all_srcc.end(), srccs.begin(), srccs.end());
    summary.per_fixed_value.push_back(fixed);
  }
  if (all_plcc.empty()) {
    throw MissingCellError("no complete slice in the evaluation table");
  }
  summary.slices = all_plcc.size();
  summary.plcc_mean_abs = mean(all_plcc);
  summary.srcc_mean_abs = mean(all_srcc);
  summary.plcc_median_abs = median(all_plcc);
  summary.srcc_median_abs = median(all_srcc);
  for (const auto& [video, values] : by_video) {
    summary.per_video[video] = {mean(values.first), mean(values.second)};
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Feature correlation

std::vector<double> adaptive_average_pool(std::span<const double> v,
                                          std::size_t length) {
  if (length == 0 || v.empty()) throw AlignmentError("cannot pool to length 0");
  if (length > v.size()) {
    throw AlignmentError(fmt::format("cannot pool {} values up to {}",
                                     v.size(), length));
  }
  std::vector<double> out(length);
  const std::size_t n = v.size();
  for (std::size_t j = 0; j < length; ++j) {
    const std::size_t lo = j * n / length;
    const std::size_t hi = ((j + 1) * n + length - 1) / length;
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += v[i];
    out[j] = sum / static_cast<double>(hi - lo);
  }
  return out;
}

std::vector<double> pooled_clip_features(const LayeredImageMetric& metric,
                                         std::size_t layer,
                                         const VideoClip& clip) {
  if (clip.frames.empty()) throw ShapeError("clip has no frames");
  std::vector<double> mean_features;
  for (const Frame& frame : clip.frames) {
    const auto pooled = metric.pooled_features(frame, layer);
    if (mean_features.empty()) mean_features.assign(pooled.size(), 0.0);
    for (std::size_t c = 0; c < pooled.size(); ++c) mean_features[c] += pooled[c];
  }
  for (double& v : mean_features) v /= static_cast<double>(clip.frames.size());
  return mean_features;
}

FeatureMatrix feature_correlation_matrix(const VideoQualityMetric& vqa,
                                         std::span<const std::size_t> vqa_taps,
                                         std::span<const ImageTap> image_taps,
                                         std::span<const VideoClip> videos) {
  if (videos.empty()) throw ShapeError("feature correlation needs >= 1 video");
  const auto names = vqa.tap_names();
  FeatureMatrix m;
  for (std::size_t p : vqa_taps) {
    if (p < 1 || p > vqa.num_taps()) {
      throw IndexError(fmt::format("{}: tap {} outside 1..{}", vqa.name(), p,
                                   vqa.num_taps()));
    }
    m.row_labels.push_back(fmt::format("{}:{}", vqa.name(), names[p - 1]));
  }
  for (const ImageTap& t : image_taps) {
    if (t.metric == nullptr) throw ConfigError("null image metric");
    require_tap(t.layer, t.metric->num_layers(), t.metric->name());
    m.col_labels.push_back(
        t.label.empty()
            ? fmt::format("{}:{}", t.metric->name(),
                          t.metric->tap_names()[t.layer - 1])
            : t.label);
  }
  m.values.assign(vqa_taps.size(), std::vector<double>(image_taps.size(), 0.0));

  for (const VideoClip& clip : videos) {
    std::vector<std::vector<double>> image_features;
    for (const ImageTap& t : image_taps) {
      image_features.push_back(pooled_clip_features(*t.metric, t.layer, clip));
    }
    for (std::size_t p = 0; p < vqa_taps.size(); ++p) {
      const auto video_features = vqa.extract_video_features(clip, vqa_taps[p]);
      for (std::size_t q = 0; q < image_taps.size(); ++q) {
        std::vector<double> a = video_features;
        std::vector<double> b = image_features[q];
        if (a.size() > b.size()) a = adaptive_average_pool(a, b.size());
        if (b.size() > a.size()) b = adaptive_average_pool(b, a.size());
        m.values[p][q] += 100.0 * cosine_similarity(a, b);
      }
    }
  }
  for (auto& row : m.values) {
    for (double& v : row) v /= static_cast<double>(videos.size());
  }
  return m;
}

}  // namespace ic2vqa
