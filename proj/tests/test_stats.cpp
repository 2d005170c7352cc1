#include <doctest.h>

#include <cmath>

#include "ic2vqa/errors.hpp"
#include "ic2vqa/rng.hpp"
#include "ic2vqa/stats.hpp"

using namespace ic2vqa;

namespace {

// Spearman without ties: 1 − 6 Σd² / (n(n² − 1)).
double spearman_no_ties(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double d2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ra = 1, rb = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (a[j] < a[i]) ra += 1;
      if (b[j] < b[i]) rb += 1;
    }
    d2 += (ra - rb) * (ra - rb);
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

}  // namespace

TEST_CASE("pearson textbook value") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 5, 4, 5};
  // sxy = 6, sxx = 10, syy = 6.
  CHECK(pearson(x, y) == doctest::Approx(6.0 / std::sqrt(60.0)).epsilon(1e-12));
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<double> rev{5, 4, 3, 2, 1};
  CHECK(pearson(x, rev) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("spearman with ties uses average ranks") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 5, 4, 5};
  const auto r = average_ranks(y);
  CHECK(r == std::vector<double>{1, 2.5, 4.5, 2.5, 4.5});
  // Ranks of y deviate by (−2, −0.5, 1.5, −0.5, 1.5): sxy = 7, syy = 9.
  CHECK(spearman(x, y) == doctest::Approx(7.0 / std::sqrt(90.0)).epsilon(1e-12));
  CHECK(average_ranks(std::vector<double>{3, 3, 3}) == std::vector<double>{2, 2, 2});
}

TEST_CASE("spearman matches the no-ties closed form on random data") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 3 + rng.below(20);
    std::vector<double> a(n), b(n);
    for (double& v : a) v = rng.uniform(-1, 1);
    for (double& v : b) v = rng.uniform(-1, 1);
    CHECK(spearman(a, b) == doctest::Approx(spearman_no_ties(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("correlations are invariant to the expected transforms") {
  Rng rng(32);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 4 + rng.below(10);
    std::vector<double> a(n), b(n);
    for (double& v : a) v = rng.uniform(0.1, 1);
    for (double& v : b) v = rng.uniform(0.1, 1);
    const double p = pearson(a, b), s = spearman(a, b);
    CHECK(std::abs(p) <= 1.0);
    CHECK(std::abs(s) <= 1.0);
    CHECK(pearson(b, a) == doctest::Approx(p).epsilon(1e-12));
    std::vector<double> affine(n), cubed(n), negated(n);
    for (std::size_t i = 0; i < n; ++i) {
      affine[i] = 3.0 * a[i] - 7.0;
      cubed[i] = a[i] * a[i] * a[i];
      negated[i] = -a[i];
    }
    CHECK(pearson(affine, b) == doctest::Approx(p).epsilon(1e-10));
    CHECK(spearman(cubed, b) == doctest::Approx(s).epsilon(1e-12));
    CHECK(pearson(negated, b) == doctest::Approx(-p).epsilon(1e-12));
    CHECK(spearman(negated, b) == doctest::Approx(-s).epsilon(1e-12));
  }
}

TEST_CASE("degenerate correlation inputs") {
  const std::vector<double> c{0.5, 0.5, 0.5}, x{1, 2, 3};
  CHECK_THROWS_AS(pearson(c, x), UndefinedCorrelationError);
  CHECK_THROWS_AS(spearman(c, x), UndefinedCorrelationError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), ShapeError);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("linspace, mean and median") {
  CHECK(linearly_decreasing(5) == std::vector<double>{1, 0.75, 0.5, 0.25, 0});
  CHECK(linearly_decreasing(2) == std::vector<double>{1, 0});
  CHECK(linearly_decreasing(1) == std::vector<double>{1});
  CHECK(mean(std::vector<double>{1, 2, 6}) == 3.0);
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(median({}) == 0.0);
}
