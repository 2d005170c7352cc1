// Acceptance harness: one PASS/FAIL line per criterion, with the measured
// value and the pinned tolerance. Exit status is non-zero when any criterion
// fails, unless it was listed with --expect-fail (documented known failures);
// those still print FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ic2vqa/attack.hpp"
#include "ic2vqa/campaign.hpp"
#include "ic2vqa/errors.hpp"
#include "ic2vqa/evaluation.hpp"
#include "ic2vqa/losses.hpp"
#include "ic2vqa/stats.hpp"
#include "ic2vqa/synthetic.hpp"
#include "ic2vqa/toy_models.hpp"
#include "test_support.hpp"

using namespace ic2vqa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::vector<double> kEps{1.0 / 255, 2.0 / 255, 5.0 / 255, 10.0 / 255};
const std::vector<std::size_t> kIters{1, 2, 5};

// 1. Budget invariant over randomized attack runs.
Outcome budget_invariant() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  auto iqa = make_toy_iqa(7);
  auto iqa2 = make_toy_iqa(8);
  auto emb = make_toy_embedder(7);
  auto vqa = make_toy_vqa(7);
  std::size_t checks = 0, violations = 0;
  for (int run = 0; run < 200; ++run) {
    VideoClip x = testing::random_clip(rng, 4, 16, 16);
    // Saturated pixels make the range clamp bite.
    for (Frame& f : x.frames) {
      for (double& v : f.values()) {
        if (rng.uniform() < 0.1) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
      }
    }
    AttackConfig c;
    c.epsilon = kEps[rng.below(kEps.size())];
    c.iterations = kIters[rng.below(kIters.size())];
    c.seed = rng.below(1u << 30);
    auto observe = [&](const Perturbation& d) {
      for (std::size_t i = 0; i < d.data.size(); ++i) {
        for (std::size_t j = 0; j < d.data[i].size(); ++j) {
          const double dv = d.data[i].values()[j];
          const double v = x.frames[i].values()[j] + dv;
          ++checks;
          if (!(std::abs(dv) <= c.epsilon) || v < 0.0 || v > 1.0) ++violations;
        }
      }
    };
    switch (run % 4) {
      case 0:
      case 1: {
        c.loss.use_embed = rng.uniform() < 0.5;
        c.loss.use_temporal = rng.uniform() < 0.5;
        c.loss.layer_per_metric = {{iqa->name(), 1 + rng.below(5)},
                                   {iqa2->name(), 1 + rng.below(5)}};
        c.multi_metric = run % 8 < 4 ? MultiMetricMode::kSequential
                                     : MultiMetricMode::kSummed;
        const LayeredImageMetric* ms[] = {iqa.get(), iqa2.get()};
        run_ic2vqa(c, x, ms, emb.get(), observe);
        break;
      }
      case 2:
        run_pgd(c, x, *iqa, observe);
        break;
      default:
        run_square(c, x, *vqa, 5 * c.iterations, observe);
        break;
    }
  }
  const double t = seconds(t0);
  return {violations == 0 && t < 300.0,
          fmt::format("{} element checks, {} violations, {:.1f}s (need 0, <300s)",
                      checks, violations, t)};
}

// 2. Loss gradients against central differences.
Outcome gradient_correctness() {
  Rng rng(1002);
  auto iqa = make_toy_iqa(7);
  auto iqa2 = make_toy_iqa(8);
  auto emb = make_toy_embedder(7);
  const double h = 1e-6;
  std::map<std::string, double> worst;
  std::map<std::string, int> count;

  auto check = [&](const std::string& name, const std::vector<Frame>& delta,
                   const std::vector<Frame>& grad,
                   const std::function<double(const std::vector<Frame>&)>& f) {
    double num = 0, den_a = 0, den_b = 0;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      for (std::size_t j = 0; j < delta[i].size(); ++j) {
        auto p = delta, m = delta;
        p[i].values()[j] += h;
        m[i].values()[j] -= h;
        const double fd = (f(p) - f(m)) / (2 * h);
        const double a = grad[i].values()[j];
        num += (a - fd) * (a - fd);
        den_a += a * a;
        den_b += fd * fd;
      }
    }
    const double rel = std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_b), 1e-12});
    worst[name] = std::max(worst[name], rel);
    ++count[name];
  };

  for (int inst = 0; inst < 50; ++inst) {
    const auto x = testing::random_frames(rng, 2, 3, 4, 4, 0.0, 1.0);
    const auto d = testing::random_frames(rng, 2, 3, 4, 4, -0.1, 0.1);
    // Feature taps only: on the one-element score tap the cosine is constant,
    // the true gradient is zero and a relative error is undefined.
    const std::size_t k = 1 + rng.below(4);
    check("cross_layer", d, cross_layer_loss_with_gradient(*iqa, k, x, d).gradient,
          [&](const std::vector<Frame>& dd) { return cross_layer_loss(*iqa, k, x, dd); });
    check("embed", d, embed_similarity_loss_with_gradient(*emb, x, d).gradient,
          [&](const std::vector<Frame>& dd) { return embed_similarity_loss(*emb, x, dd); });
    check("temporal", d, temporal_loss_with_gradient(d).gradient,
          [&](const std::vector<Frame>& dd) { return temporal_loss(dd); });
    const std::vector<WeightedTap> taps{{iqa.get(), k, rng.uniform(0.2, 2.0)},
                                        {iqa2.get(), 1 + rng.below(4), rng.uniform(0.2, 2.0)}};
    check("multi_metric", d, multi_metric_loss_with_gradient(taps, x, d).gradient,
          [&](const std::vector<Frame>& dd) { return multi_metric_loss(taps, x, dd); });
  }
  bool pass = true;
  std::string detail;
  for (const auto& [name, w] : worst) {
    pass = pass && w < 1e-3 && count[name] >= 50;
    detail += fmt::format("{} max rel err {:.2e} over {}; ", name, w, count[name]);
  }
  return {pass, detail + "(need < 1e-3 on >= 50 each)"};
}

// 3. Closed-form loss values.
Outcome closed_forms() {
  Rng rng(1003);
  auto iqa = make_toy_iqa(7);
  auto iqa2 = make_toy_iqa(8);
  auto emb = make_toy_embedder(7);
  const auto x = testing::random_frames(rng, 3, 3, 16, 16, 0.0, 1.0);
  const std::vector<Frame> zero(3, Frame(3, 16, 16, 0.0));
  std::vector<double> errors;
  for (std::size_t k = 1; k <= 5; ++k) {
    errors.push_back(std::abs(cross_layer_loss(*iqa, k, x, zero) - 1.0));
  }
  errors.push_back(std::abs(embed_similarity_loss(*emb, x, zero) - 1.0));
  errors.push_back(std::abs(temporal_loss(std::vector<Frame>(4, Frame(3, 8, 8, 0.03)))));
  const std::vector<Frame> two{Frame(2, 2, 2, 0.0), Frame(2, 2, 2, 1.0)};
  errors.push_back(std::abs(temporal_loss(two) - std::sqrt(8.0)));
  const std::vector<WeightedTap> taps{{iqa.get(), 1, 0.5}, {iqa2.get(), 2, 1.5}};
  errors.push_back(std::abs(multi_metric_loss(taps, x, zero) - 2.5));
  const double worst = *std::max_element(errors.begin(), errors.end());
  return {worst <= 1e-9,
          fmt::format("{} closed forms, max abs error {:.2e} (need <= 1e-9)",
                      errors.size(), worst)};
}

nlohmann::json desk_config(const std::string& name, const nlohmann::json& attack,
                           bool embed) {
  nlohmann::json adapters = {
      {"image_metrics", {{{"name", "toy-iqa"}, {"seed", 7}, {"tap", "layer1"}}}},
      {"vqa", {{"name", "toy-vqa"}, {"seed", 7}}}};
  if (embed) adapters["embedder"] = {{"name", "toy-embed"}, {"seed", 7}};
  return {{"name", name},
          {"seed", 1},
          {"workers", 1},
          {"write_videos", false},
          {"dataset",
           {{"synthetic",
             {{"count", 10}, {"frames", 75}, {"height", 64}, {"width", 64}, {"seed", 3}}}}},
          {"adapters", adapters},
          {"attack", attack},
          {"grid", {{"epsilon", {"1/255", "2/255", "5/255", "10/255"}}, {"iterations", {1, 2, 5}}}}};
}

struct DeskRun {
  double srcc = 0.0;
  double plcc = 0.0;
  double seconds = 0.0;
};

DeskRun desk_campaign(const fs::path& root, const nlohmann::json& doc) {
  const auto t0 = Clock::now();
  const AttackSummary a = cmd_attack(parse_config(doc), {.output = root});
  const EvaluateSummary e = cmd_evaluate(a.manifest);
  return {e.summary.srcc_mean_abs, e.summary.plcc_mean_abs, seconds(t0)};
}

struct DeskResults {
  DeskRun noise, xlayer, xlayer_embed;
};

DeskResults run_desk(const fs::path& root) {
  DeskResults r;
  r.noise = desk_campaign(root, desk_config("noise", {{"kind", "noise"}}, false));
  r.xlayer = desk_campaign(
      root, desk_config("xlayer", {{"kind", "ic2vqa"}, {"losses", {{"xlayer", true}}}}, false));
  r.xlayer_embed = desk_campaign(
      root, desk_config("xlayer_embed",
                        {{"kind", "ic2vqa"}, {"losses", {{"xlayer", true}, {"embed", true}}}},
                        true));
  return r;
}

// 4. IC2VQA lowers mean |SRCC| by at least 0.1 against equal-ε noise.
Outcome attack_effectiveness(const DeskResults& r) {
  const double gap = r.noise.srcc - r.xlayer.srcc;
  const double t = r.noise.seconds + r.xlayer.seconds;
  return {gap >= 0.1 && t < 600.0,
          fmt::format("mean |SRCC| ic2vqa {:.4f} vs noise {:.4f}, gap {:+.4f} "
                      "(need >= 0.1); |PLCC| {:.4f} vs {:.4f}; {:.0f}s (need < 600s)",
                      r.xlayer.srcc, r.noise.srcc, gap, r.xlayer.plcc, r.noise.plcc, t)};
}

// 5. Adding the embedding term does not raise mean |SRCC|.
Outcome ablation_ordering(const DeskResults& r) {
  return {r.xlayer_embed.srcc <= r.xlayer.srcc,
          fmt::format("mean |SRCC| xlayer+embed {:.4f} vs xlayer {:.4f} (need <=)",
                      r.xlayer_embed.srcc, r.xlayer.srcc)};
}

// Textbook Pearson: Σxy − n·x̄·ȳ form.
double textbook_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    sab += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  return (n * sab - sa * sb) / (std::sqrt(n * saa - sa * sa) * std::sqrt(n * sbb - sb * sb));
}

// Rank by counting: #smaller + (#equal + 1) / 2.
std::vector<double> counting_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) less += 1;
      if (w == v[i]) equal += 1;
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

// 6. Statistics against textbook formulas.
Outcome statistics_oracles() {
  Rng rng(1006);
  double worst = 0;
  int tie_cases = 0;
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; });
  };
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 3 + rng.below(40);
    const bool ties = t % 2 == 1;
    std::vector<double> a(n), b(n);
    do {
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = ties ? static_cast<double>(rng.below(4)) : rng.uniform(-1, 1);
        b[i] = ties ? static_cast<double>(rng.below(5)) : rng.uniform(-1, 1);
      }
    } while (constant(a) || constant(b));
    if (ties) ++tie_cases;
    worst = std::max(worst, std::abs(pearson(a, b) - textbook_pearson(a, b)));
    worst = std::max(worst, std::abs(spearman(a, b) -
                                     textbook_pearson(counting_ranks(a), counting_ranks(b))));
  }
  return {worst <= 1e-12,
          fmt::format("1000 vector pairs ({} with ties), max abs diff {:.2e} (need <= 1e-12)",
                      tie_cases, worst)};
}

// 7. Square attack contract on the toy VQA. "Initial" is the clean-video
// score; the first entry of the best-so-far trace is reported alongside.
Outcome square_contract() {
  std::size_t over_budget = 0, non_monotone = 0, backward = 0;
  bool enough = true;
  std::string per_eps;
  for (double eps : kEps) {
    std::size_t beats_clean = 0, beats_first = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto vqa = make_toy_vqa(7);
      const VideoClip x = synthesize_clip(100 + seed, 8, 32, 32, fmt::format("sq{}", seed));
      AttackConfig c;
      c.kind = AttackKind::kSquare;
      c.epsilon = eps;
      c.seed = seed;
      const double clean = vqa->score_video(x);
      const std::size_t before = vqa->query_count();
      const AttackResult r = run_square(c, x, *vqa, 300);
      const std::size_t queries = vqa->query_count() - before;
      if (r.queries_used > 300 || queries > 300) ++over_budget;
      for (std::size_t i = 1; i < r.score_trace.size(); ++i) {
        if (r.score_trace[i] < r.score_trace[i - 1]) ++non_monotone;
      }
      backward += vqa->backbone().backward_calls();
      const double final_score = vqa->score_video(apply_perturbation(x, r.delta));
      if (final_score >= clean) ++beats_clean;
      if (!r.score_trace.empty() && final_score >= r.score_trace.front()) ++beats_first;
    }
    enough = enough && beats_clean >= 9;
    per_eps += fmt::format("eps {}/255: {}/10 vs clean, {}/10 vs first query; ",
                           epsilon_label(eps), beats_clean, beats_first);
  }
  return {enough && over_budget == 0 && non_monotone == 0 && backward == 0,
          fmt::format("{}(need >= 9/10 vs clean at every eps); over-budget runs {}, "
                      "trace decreases {}, gradient calls {} (need 0, 0, 0)",
                      per_eps, over_budget, non_monotone, backward)};
}

// 8. Y4M round trip on the quantized lattice.
Outcome media_round_trip() {
  Rng rng(1008);
  testing::TempDir dir("acceptance-media");
  std::size_t exact = 0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t h = 8 + 2 * rng.below(12), w = 8 + 2 * rng.below(12);
    const std::string bytes = testing::random_in_gamut_y4m(rng, 1 + rng.below(4), h, w);
    testing::write_bytes(dir / "a.y4m", bytes);
    const VideoClip clip = load_y4m(dir / "a.y4m");
    write_y4m(clip, dir / "b.y4m");
    const VideoClip again = load_y4m(dir / "b.y4m");
    bool same = testing::read_bytes(dir / "b.y4m") == bytes &&
                again.num_frames() == clip.num_frames();
    for (std::size_t f = 0; same && f < clip.num_frames(); ++f) {
      const auto a = clip.frames[f].values();
      const auto b = again.frames[f].values();
      same = std::equal(a.begin(), a.end(), b.begin(), b.end());
    }
    if (same) ++exact;
  }
  return {exact == 20, fmt::format("{}/20 clips bit-exact (need 20)", exact)};
}

// 9. Shared-layer feature similarity beats every cross-seed control.
Outcome feature_matrix() {
  auto vqa = make_toy_vqa(7);
  auto iqa = make_toy_iqa(7);
  std::vector<std::unique_ptr<ToyIqa>> controls;
  for (std::uint64_t s : {8, 9, 10}) controls.push_back(make_toy_iqa(s));
  std::vector<VideoClip> videos;
  for (std::uint64_t i = 0; i < 4; ++i) {
    videos.push_back(synthesize_clip(200 + i, 8, 64, 64, fmt::format("fm{}", i)));
  }
  const std::vector<std::size_t> rows{1, 2, 3, 4};
  std::vector<ImageTap> cols;
  for (std::size_t k = 1; k <= 4; ++k) cols.push_back({iqa.get(), k, ""});
  for (const auto& c : controls) {
    for (std::size_t k = 1; k <= 4; ++k) cols.push_back({c.get(), k, ""});
  }
  const FeatureMatrix m = feature_correlation_matrix(*vqa, rows, cols, videos);
  double min_shared = 1e9, max_control = -1e9, lo = 1e9, hi = -1e9;
  for (std::size_t p = 0; p < 4; ++p) {
    min_shared = std::min(min_shared, m.values[p][p]);
    for (std::size_t q = 0; q < m.values[p].size(); ++q) {
      lo = std::min(lo, m.values[p][q]);
      hi = std::max(hi, m.values[p][q]);
      if (q >= 4) max_control = std::max(max_control, m.values[p][q]);
    }
  }
  return {min_shared > max_control && lo >= -100.0 && hi <= 100.0,
          fmt::format("min shared-layer {:.4f} vs max control {:.4f} (need >); "
                      "range [{:.4f}, {:.4f}] (need within [-100, 100])",
                      min_shared, max_control, lo, hi)};
}

// 10. Two runs of one manifest give identical δ dumps and CSVs.
Outcome determinism() {
  testing::TempDir a("acceptance-det-a"), b("acceptance-det-b");
  nlohmann::json doc = {
      {"name", "det"},
      {"seed", 5},
      {"workers", 1},
      {"write_videos", false},
      {"dataset",
       {{"synthetic", {{"count", 2}, {"frames", 8}, {"height", 32}, {"width", 32}, {"seed", 9}}}}},
      {"adapters",
       {{"image_metrics", {{{"name", "toy-iqa"}, {"seed", 7}, {"tap", "layer2"}}}},
        {"embedder", {{"name", "toy-embed"}, {"seed", 7}}},
        {"vqa", {{"name", "toy-vqa"}, {"seed", 7}}}}},
      {"attack", {{"kind", "ic2vqa"}, {"losses", {{"xlayer", true}, {"embed", true}, {"temporal", true}}}}},
      {"grid", {{"epsilon", {"2/255", "10/255"}}, {"iterations", {1, 5}}}}};
  const CampaignConfig config = parse_config(doc);
  const AttackSummary ra = cmd_attack(config, {.output = a.path()});
  const AttackSummary rb = cmd_attack(config, {.output = b.path()});
  std::size_t compared = 0, differing = 0;
  auto compare = [&](const fs::path& pa, const fs::path& pb) {
    ++compared;
    if (!fs::exists(pa) || !fs::exists(pb) ||
        testing::read_bytes(pa) != testing::read_bytes(pb)) {
      ++differing;
    }
  };
  compare(ra.campaign_dir / "table.csv", rb.campaign_dir / "table.csv");
  for (const auto& e : fs::directory_iterator(ra.campaign_dir / "cells")) {
    if (e.path().extension() == ".delta" || e.path().extension() == ".csv") {
      compare(e.path(), rb.campaign_dir / "cells" / e.path().filename());
    }
  }
  return {differing == 0 && compared == 1 + 2 * 8,
          fmt::format("{} files compared, {} differ (need 17 compared, 0 differ)",
                      compared, differing)};
}

std::set<int> parse_expected(int argc, char** argv) {
  std::set<int> out;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--expect-fail") {
      std::stringstream ss(argv[i + 1]);
      std::string item;
      while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::set<int> expected = parse_expected(argc, argv);
  testing::TempDir desk_root("acceptance-desk");
  std::optional<DeskResults> desk;
  auto desk_results = [&]() -> const DeskResults& {
    if (!desk) desk = run_desk(desk_root.path());
    return *desk;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"budget invariant", budget_invariant},
      {"gradient correctness", gradient_correctness},
      {"closed-form loss values", closed_forms},
      {"attack effectiveness", [&] { return attack_effectiveness(desk_results()); }},
      {"ablation ordering", [&] { return ablation_ordering(desk_results()); }},
      {"statistics oracles", statistics_oracles},
      {"square attack contract", square_contract},
      {"media round trip", media_round_trip},
      {"feature correlation matrix", feature_matrix},
      {"determinism", determinism},
  };

  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    const bool known = expected.count(id) > 0;
    std::string tag;
    if (!o.pass && known) tag = " [known failure]";
    if (o.pass && known) tag = " [listed as known failure but passed]";
    fmt::print("{} {:>2}. {}: {}{}\n", o.pass ? "PASS" : "FAIL", id,
               criteria[i].first, o.detail, tag);
    std::fflush(stdout);
    if (!o.pass && !known) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
