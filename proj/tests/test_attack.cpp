#include <doctest.h>

#include <cmath>

#include "ic2vqa/attack.hpp"
#include "ic2vqa/errors.hpp"
#include "ic2vqa/toy_models.hpp"
#include "test_support.hpp"

using namespace ic2vqa;

namespace {

AttackConfig xlayer_config(const LayeredImageMetric& m, double eps, std::size_t iters) {
  AttackConfig c;
  c.epsilon = eps;
  c.iterations = iters;
  c.loss.layer_per_metric = {{m.name(), 1}};
  return c;
}

// Every δ handed to the observer must respect the budget and the pixel range.
struct BudgetWatch {
  const VideoClip* x;
  double eps;
  std::size_t calls = 0;
  bool ok = true;
  void operator()(const Perturbation& d) {
    ++calls;
    if (d.max_abs() > eps) ok = false;
    for (std::size_t i = 0; i < d.data.size(); ++i) {
      for (std::size_t j = 0; j < d.data[i].size(); ++j) {
        const double v = x->frames[i].values()[j] + d.data[i].values()[j];
        if (v < 0.0 || v > 1.0) ok = false;
      }
    }
  }
};

bool same_delta(const Perturbation& a, const Perturbation& b) {
  if (a.data.size() != b.data.size()) return false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const auto av = a.data[i].values();
    const auto bv = b.data[i].values();
    if (!std::equal(av.begin(), av.end(), bv.begin(), bv.end())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("initial perturbation is exactly 1/255") {
  const std::vector<Frame> shape(2, Frame(3, 5, 7, 0.3));
  const Perturbation d = init_perturbation(shape, 0.1);
  REQUIRE(d.data.size() == 2);
  for (const Frame& f : d.data) {
    CHECK(f.same_shape(shape[0]));
    for (double v : f.values()) CHECK(v == 1.0 / 255.0);
  }
  CHECK(d.epsilon == 0.1);
}

TEST_CASE("projection clips to the budget and the pixel range") {
  std::vector<Frame> x{Frame(1, 1, 4)};
  x[0].values()[0] = 0.99;
  x[0].values()[1] = 0.005;
  x[0].values()[2] = 0.5;
  x[0].values()[3] = 0.5;
  Perturbation d;
  d.epsilon = 10.0 / 255.0;
  d.data.emplace_back(1, 1, 4);
  d.data[0].values()[0] = 10.0 / 255.0;
  d.data[0].values()[1] = -10.0 / 255.0;
  d.data[0].values()[2] = 0.5;
  d.data[0].values()[3] = -0.5;
  Perturbation unclamped = d;
  project(d, x, true);
  CHECK(d.data[0].values()[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(x[0].values()[0] + d.data[0].values()[0] <= 1.0);
  CHECK(d.data[0].values()[1] == -0.005);
  CHECK(d.data[0].values()[2] == 10.0 / 255.0);
  CHECK(d.data[0].values()[3] == -10.0 / 255.0);
  project(unclamped, x, false);
  CHECK(unclamped.data[0].values()[0] == 10.0 / 255.0);
  CHECK(unclamped.data[0].values()[1] == -10.0 / 255.0);

  Perturbation bad;
  bad.epsilon = 0.1;
  CHECK_THROWS_AS(project(bad, x, true), ShapeError);
}

TEST_CASE("projection is idempotent on random inputs") {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto x = testing::random_frames(rng, 2, 3, 4, 4, 0.0, 1.0);
    Perturbation d;
    d.epsilon = rng.uniform(0.0, 0.2);
    d.data = testing::random_frames(rng, 2, 3, 4, 4, -0.5, 0.5);
    project(d, x, true);
    CHECK(d.max_abs() <= d.epsilon);
    Perturbation again = d;
    project(again, x, true);
    CHECK(same_delta(again, d));
  }
}

TEST_CASE("first Adam step moves each parameter by the learning rate") {
  Adam adam(0.01);
  std::vector<Frame> p{Frame(1, 1, 3, 0.0)};
  std::vector<Frame> g{Frame(1, 1, 3)};
  g[0].values()[0] = 5.0;
  g[0].values()[1] = -0.2;
  g[0].values()[2] = 0.0;
  CHECK_FALSE(adam.has_state());
  adam.step(p, g);
  CHECK(adam.steps() == 1);
  CHECK(p[0].values()[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[0].values()[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p[0].values()[2] == 0.0);
  std::vector<Frame> wrong;
  CHECK_THROWS_AS(adam.step(p, wrong), ShapeError);
}

TEST_CASE("ic2vqa respects the budget at every step") {
  auto toy = make_toy_iqa(7, {.width = 4});
  Rng rng(22);
  VideoClip x = testing::random_clip(rng, 3, 16, 16);
  x.frames[0].values()[0] = 1.0;
  x.frames[1].values()[0] = 0.0;
  for (double eps : {0.0, 2.0 / 255, 50.0 / 255}) {
    AttackConfig c = xlayer_config(*toy, eps, 20);
    c.loss.use_temporal = true;
    BudgetWatch watch{&x, eps};
    const LayeredImageMetric* metrics[] = {toy.get()};
    const AttackResult r = run_ic2vqa(c, x, metrics, nullptr, std::ref(watch));
    CHECK(watch.ok);
    CHECK(watch.calls == 21);
    CHECK(r.loss_trace.size() == 20);
    CHECK(r.delta.max_abs() <= eps);
    if (eps == 0.0) CHECK(r.delta.max_abs() == 0.0);
  }
}

TEST_CASE("ic2vqa with zero iterations returns the projected initial perturbation") {
  auto toy = make_toy_iqa(7, {.width = 4});
  Rng rng(23);
  const VideoClip x = testing::random_clip(rng, 2, 16, 16);
  const LayeredImageMetric* metrics[] = {toy.get()};
  const AttackResult r = run_ic2vqa(xlayer_config(*toy, 0.1, 0), x, metrics, nullptr);
  CHECK(r.loss_trace.empty());
  CHECK_FALSE(r.final_loss.has_value());
  Perturbation expected = init_perturbation(x.frames, 0.1);
  project(expected, x.frames, true);
  CHECK(same_delta(r.delta, expected));
}

TEST_CASE("ic2vqa lowers the loss and is deterministic") {
  auto toy = make_toy_iqa(7, {.width = 4});
  auto emb = make_toy_embedder(7, {.width = 4});
  Rng rng(24);
  const VideoClip x = testing::random_clip(rng, 3, 16, 16);
  AttackConfig c = xlayer_config(*toy, 10.0 / 255, 20);
  c.loss.use_embed = true;
  const LayeredImageMetric* metrics[] = {toy.get()};
  const AttackResult a = run_ic2vqa(c, x, metrics, emb.get());
  const AttackResult b = run_ic2vqa(c, x, metrics, emb.get());
  CHECK(same_delta(a.delta, b.delta));
  REQUIRE(a.final_loss.has_value());
  CHECK(a.final_loss->total < a.loss_trace.front().total - 1e-3);

  const LossContext ctx(c.loss, {toy.get()}, emb.get(), x.frames);
  CHECK(total_loss(ctx, a.delta.data).total ==
        doctest::Approx(a.final_loss->total).epsilon(1e-12));
}

TEST_CASE("sequential mode takes one step per metric, summed mode one per iteration") {
  auto m1 = make_toy_iqa(7, {.width = 4});
  auto m2 = make_toy_iqa(8, {.width = 4});
  Rng rng(25);
  const VideoClip x = testing::random_clip(rng, 2, 16, 16);
  AttackConfig c;
  c.epsilon = 5.0 / 255;
  c.iterations = 3;
  c.loss.layer_per_metric = {{m1->name(), 1}, {m2->name(), 2}};
  c.loss.metric_weights = {{m2->name(), 0.5}};
  const LayeredImageMetric* metrics[] = {m1.get(), m2.get()};
  const AttackResult seq = run_ic2vqa(c, x, metrics, nullptr);
  REQUIRE(seq.loss_trace.size() == 6);
  CHECK(seq.loss_trace[0].metric == 0);
  CHECK(seq.loss_trace[1].metric == 1);
  CHECK(seq.loss_trace[5].iteration == 2);
  // The first entry is evaluated at the projected initial δ.
  Perturbation init = init_perturbation(x.frames, c.epsilon);
  project(init, x.frames, true);
  CHECK(seq.loss_trace[0].xlayer ==
        doctest::Approx(cross_layer_loss(*m1, 1, x.frames, init.data)).epsilon(1e-12));

  c.multi_metric = MultiMetricMode::kSummed;
  const AttackResult sum = run_ic2vqa(c, x, metrics, nullptr);
  REQUIRE(sum.loss_trace.size() == 3);
  CHECK(sum.loss_trace[0].metric == 2);
  std::vector<WeightedTap> taps{{m1.get(), 1, 1.0}, {m2.get(), 2, 0.5}};
  CHECK(sum.loss_trace[0].xlayer ==
        doctest::Approx(multi_metric_loss(taps, x.frames, init.data)).epsilon(1e-12));
}

TEST_CASE("ic2vqa rejects bad configurations") {
  auto toy = make_toy_iqa(7, {.width = 4});
  Rng rng(26);
  const VideoClip x = testing::random_clip(rng, 2, 16, 16);
  const LayeredImageMetric* metrics[] = {toy.get()};
  AttackConfig c = xlayer_config(*toy, 1.5, 2);
  CHECK_THROWS_AS(run_ic2vqa(c, x, metrics, nullptr), ConfigError);
  c.epsilon = 0.1;
  c.step_size = 0;
  CHECK_THROWS_AS(run_ic2vqa(c, x, metrics, nullptr), ConfigError);
  c.step_size = 0.01;
  CHECK_THROWS_AS(run_ic2vqa(c, x, {}, nullptr), ConfigError);
  c.loss.use_embed = true;
  CHECK_THROWS_AS(run_ic2vqa(c, x, metrics, nullptr), ConfigError);
  CHECK_THROWS_AS(parse_attack_kind("fgsm"), ConfigError);
  CHECK(parse_attack_kind(to_string(AttackKind::kSquare)) == AttackKind::kSquare);
  CHECK(parse_multi_metric_mode("summed") == MultiMetricMode::kSummed);
}

TEST_CASE("single-step pgd is a signed gradient step of size epsilon") {
  auto toy = make_toy_iqa(7, {.width = 4});
  Rng rng(27);
  const VideoClip x = testing::random_clip(rng, 2, 16, 16);
  AttackConfig c;
  c.kind = AttackKind::kPgd;
  c.epsilon = 2.0 / 255;
  c.iterations = 1;
  const AttackResult r = run_pgd(c, x, *toy);
  const double one = 1.0;
  double clean = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    const Pullback p = toy->score_with_pullback(x.frames[i]);
    clean += p.value[0] / 2;
    const Frame g = p.pullback(std::span(&one, 1));
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double s = g.values()[j] > 0 ? 1.0 : (g.values()[j] < 0 ? -1.0 : 0.0);
      const double expected = std::clamp(x.frames[i].values()[j] + c.epsilon * s, 0.0, 1.0) -
                              x.frames[i].values()[j];
      CHECK(r.delta.data[i].values()[j] == doctest::Approx(expected).epsilon(1e-15));
    }
  }
  REQUIRE(r.score_trace.size() == 2);
  CHECK(r.score_trace[0] == doctest::Approx(clean).epsilon(1e-14));
  CHECK(r.score_trace[1] > r.score_trace[0]);
}

TEST_CASE("multi-step pgd stays in budget and does not lower the score") {
  auto toy = make_toy_iqa(7, {.width = 4});
  Rng rng(28);
  const VideoClip x = testing::random_clip(rng, 2, 16, 16);
  AttackConfig c;
  c.epsilon = 8.0 / 255;
  c.iterations = 5;
  BudgetWatch watch{&x, c.epsilon};
  const AttackResult r = run_pgd(c, x, *toy, std::ref(watch));
  CHECK(watch.ok);
  CHECK(watch.calls == 6);
  CHECK(r.score_trace.back() >= r.score_trace.front());
  c.iterations = 0;
  const AttackResult z = run_pgd(c, x, *toy);
  CHECK(z.delta.max_abs() == 0.0);
}

TEST_CASE("square attack uses only score queries within the budget") {
  auto vqa = make_toy_vqa(7, {.width = 4});
  Rng rng(29);
  const VideoClip x = testing::random_clip(rng, 2, 16, 16);
  AttackConfig c;
  c.kind = AttackKind::kSquare;
  c.epsilon = 8.0 / 255;
  c.seed = 5;
  BudgetWatch watch{&x, c.epsilon};
  const std::size_t before = vqa->query_count();
  const AttackResult r = run_square(c, x, *vqa, 40, std::ref(watch));
  CHECK(vqa->backbone().backward_calls() == 0);
  CHECK(r.queries_used == 40);
  CHECK(vqa->query_count() - before == 40);
  CHECK(watch.ok);
  REQUIRE(r.score_trace.size() == 40);
  for (std::size_t i = 1; i < r.score_trace.size(); ++i) {
    CHECK(r.score_trace[i] >= r.score_trace[i - 1]);
  }
  CHECK(vqa->score_video(apply_perturbation(x, r.delta)) ==
        doctest::Approx(r.score_trace.back()).epsilon(1e-14));

  const AttackResult again = run_square(c, x, *vqa, 40);
  CHECK(same_delta(r.delta, again.delta));

  const std::size_t mark = vqa->query_count();
  const AttackResult none = run_square(c, x, *vqa, 0);
  CHECK(none.queries_used == 0);
  CHECK(vqa->query_count() == mark);
  CHECK(none.score_trace.empty());
  CHECK(none.delta.max_abs() <= c.epsilon);
}

TEST_CASE("square schedule halves the fraction over the budget") {
  CHECK(square_fraction(0.05, 0, 10000) == 0.05);
  CHECK(square_fraction(0.05, 10, 10000) == 0.05);
  CHECK(square_fraction(0.05, 11, 10000) == 0.025);
  CHECK(square_fraction(0.05, 300, 10000) == 0.05 / 8);
  CHECK(square_fraction(0.05, 9000, 10000) == 0.05 / 512);
  CHECK(square_fraction(0.05, 3, 0) == 0.05);
  double prev = 1.0;
  for (std::size_t it = 0; it < 300; ++it) {
    const double p = square_fraction(0.05, it, 300);
    CHECK(p <= prev);
    prev = p;
  }
}

TEST_CASE("noise baseline is uniform within the budget and seeded") {
  Rng rng(30);
  const VideoClip x = testing::random_clip(rng, 2, 32, 32);
  AttackConfig c;
  c.kind = AttackKind::kNoise;
  c.epsilon = 0.1;
  c.clamp_range = false;
  c.seed = 3;
  const AttackResult a = run_noise(c, x);
  const AttackResult b = run_noise(c, x);
  CHECK(same_delta(a.delta, b.delta));
  CHECK(a.delta.max_abs() <= 0.1);
  double mean = 0, sq = 0;
  std::size_t n = 0;
  for (const Frame& f : a.delta.data) {
    for (double v : f.values()) {
      mean += v;
      sq += v * v;
      ++n;
    }
  }
  mean /= static_cast<double>(n);
  sq /= static_cast<double>(n);
  // Uniform on [−ε, ε]: mean 0, second moment ε²/3.
  CHECK(std::abs(mean) < 0.005);
  CHECK(sq == doctest::Approx(0.01 / 3).epsilon(0.05));
  c.seed = 4;
  CHECK_FALSE(same_delta(run_noise(c, x).delta, a.delta));
}

TEST_CASE("apply_perturbation clamps and checks shapes") {
  VideoClip x;
  x.frames.emplace_back(1, 1, 2, 0.95);
  Perturbation d;
  d.data.emplace_back(1, 1, 2, 0.1);
  const VideoClip y = apply_perturbation(x, d);
  CHECK(y.frames[0].values()[0] == 1.0);
  d.data.emplace_back(1, 1, 2, 0.1);
  CHECK_THROWS_AS(apply_perturbation(x, d), ShapeError);
}
