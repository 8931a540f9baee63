#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "v2s/metrics.hpp"

using namespace v2s;

namespace {

DiscreteMeasure random_measure(std::mt19937& rng, int n, double period, bool uniform) {
  std::uniform_real_distribution<double> u(-2.0, 2.0), w(0.1, 1.0);
  DiscreteMeasure m;
  m.period = period;
  for (int i = 0; i < n; ++i) {
    const double x[2] = {u(rng), u(rng)};
    m.add(x, uniform ? 1.0 / n : w(rng));
  }
  return m;
}

// Equal-size uniform measures: an optimal plan is a permutation.
double brute_force_assignment(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double dx = a.point(i)[0] - b.point(perm[i])[0];
      const double dy = a.point(i)[1] - b.point(perm[i])[1];
      s += std::sqrt(dx * dx + dy * dy);
    }
    best = std::min(best, s / a.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("identical measures are at distance zero") {
  std::mt19937 rng(3);
  auto a = random_measure(rng, 30, 0.0, false);
  const auto r = wasserstein1(a, a);
  CHECK(std::abs(r.value) < 1e-12);
}

TEST_CASE("point masses") {
  DiscreteMeasure a, b;
  const double x[2] = {0.3, -0.2}, y[2] = {1.5, 0.7};
  a.add(x, 2.0);
  b.add(y, 2.0);
  const double s = std::hypot(1.2, 0.9);
  CHECK(wasserstein1(a, b).value == doctest::Approx(2.0 * s).epsilon(1e-14));
  // periodic wrap in q
  a.period = b.period = 1.0;
  CHECK(wasserstein1(a, b).value == doctest::Approx(2.0 * std::hypot(0.2, 0.9)).epsilon(1e-14));
}

TEST_CASE("network simplex matches brute-force assignment") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 5;
    auto a = random_measure(rng, n, 0.0, true);
    auto b = random_measure(rng, n, 0.0, true);
    CHECK(wasserstein1(a, b).value == doctest::Approx(brute_force_assignment(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("one-dimensional measures against the CDF formula") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0), w(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    DiscreteMeasure a, b;
    a.dim = b.dim = 1;
    for (int i = 0; i < 40; ++i) {
      const double x = u(rng), y = u(rng);
      a.add(&x, w(rng));
      b.add(&y, w(rng));
    }
    // rescale b to the mass of a so both sides agree on units
    const double s = a.total_mass() / b.total_mass();
    for (auto& v : b.weights) v *= s;
    const double lp = wasserstein1(a, b).value;
    CHECK(lp == doctest::Approx(wasserstein1_marginal_1d(a, b, 0)).epsilon(1e-8));
  }
}

TEST_CASE("metric axioms on random measures") {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_measure(rng, 25, 0.0, false);
    auto b = random_measure(rng, 30, 0.0, false);
    auto c = random_measure(rng, 20, 0.0, false);
    for (auto* m : {&a, &b, &c}) {
      const double t = m->total_mass();
      for (auto& v : m->weights) v /= t;
    }
    const double ab = wasserstein1(a, b).value, ba = wasserstein1(b, a).value;
    const double bc = wasserstein1(b, c).value, ac = wasserstein1(a, c).value;
    CHECK(ab == doctest::Approx(ba).epsilon(1e-10));
    CHECK(ab > 0.0);
    CHECK(ac <= ab + bc + 1e-12);
    // translation by s moves a measure by exactly s
    auto at = a;
    for (std::size_t i = 0; i < at.size(); ++i) at.coords[2 * i + 1] += 0.37;
    CHECK(wasserstein1(a, at).value == doctest::Approx(0.37).epsilon(1e-10));
    // projections are 1-Lipschitz
    CHECK(wasserstein1_marginal_1d(a, b, 0) <= ab + 1e-12);
    CHECK(wasserstein1_marginal_1d(a, b, 1) <= ab + 1e-12);
  }
}

TEST_CASE("entropic solver within its certified gap") {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 6; ++trial) {
    auto a = random_measure(rng, trial < 3 ? 4 : 40, 0.0, false);
    auto b = random_measure(rng, trial < 3 ? 4 : 40, 0.0, false);
    const double m = a.total_mass();
    for (auto& v : b.weights) v *= m / b.total_mass();
    const double exact = wasserstein1(a, b).value;
    const auto e = wasserstein1(a, b, W1Mode::Entropic);
    CHECK(e.gap <= 0.02);
    CHECK(e.lower_bound <= exact * (1 + 1e-9));
    CHECK(e.value >= exact * (1 - 1e-9));
    CHECK(std::abs(e.value - exact) <= 0.02 * exact + 1e-12);
  }
}

TEST_CASE("mass mismatch and limits") {
  DiscreteMeasure a, b;
  const double x[2] = {0, 0}, y[2] = {1, 0};
  a.add(x, 1.0);
  b.add(y, 1.5);
  const auto r = wasserstein1(a, b);
  CHECK(r.mass_adjustment == doctest::Approx(0.5));
  CHECK(r.value == doctest::Approx(1.0));
  W1Options small;
  small.max_support = 3;
  std::mt19937 rng(1);
  auto big = random_measure(rng, 4, 0.0, false);
  CHECK_THROWS_AS(wasserstein1(big, big, W1Mode::Exact, small), SupportTooLarge);
  DiscreteMeasure neg = a;
  neg.weights[0] = -1.0;
  CHECK_THROWS_AS(wasserstein1(neg, b), InvalidInput);
  DiscreteMeasure one_d;
  one_d.dim = 1;
  CHECK_THROWS_AS(wasserstein1(a, one_d), InvalidInput);
}

TEST_CASE("phase moments of a maxwellian") {
  const auto g = vlasov_grid(8.0, 64, 8.0, 256);
  RealVec m(g.points());
  const double T = 0.7, u = 0.25;
  for (std::size_t z = 0; z < g.points(); ++z) {
    const double p = g.p(z) - u;
    m[z] = 2 * kPi / 8.0 * std::exp(-0.5 * p * p / T) / std::sqrt(2 * kPi * T);
  }
  const auto r = phase_moments(m, g);
  CHECK(r.mass == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.mean_p == doctest::Approx(u).epsilon(1e-10));
  CHECK(r.p2 == doctest::Approx(T + u * u).epsilon(1e-5));
  CHECK(std::abs(r.mean_q) < 1e-4);
  // cell centres of a uniform distribution on [-4, 4): E q^2 = 16/3 - dq^2/12
  CHECK(r.q2 == doctest::Approx(16.0 / 3.0 - g.dq * g.dq / 12.0).epsilon(1e-9));
}

TEST_CASE("aggregation conserves mass and bounds the transport error") {
  const auto g = vlasov_grid(8.0, 32, 4.0, 32);
  RealVec m(g.points());
  for (std::size_t z = 0; z < g.points(); ++z) {
    const double q = g.q(z) - 0.5, p = g.p(z) + 0.3;
    m[z] = std::exp(-q * q - p * p);
  }
  DiscreteMeasure fine;
  fine.period = g.q_length();
  for (std::size_t z = 0; z < g.points(); ++z) {
    const double x[2] = {g.q(z), g.p(z)};
    fine.add(x, m[z] * g.weight() / (2 * kPi));
  }
  for (int blocks : {16, 8, 4}) {
    const auto agg = aggregate(m, g, blocks, blocks);
    CHECK(agg.measure.size() == static_cast<std::size_t>(blocks * blocks));
    CHECK(agg.measure.total_mass() == doctest::Approx(fine.total_mass()).epsilon(1e-13));
    const double w = wasserstein1(fine, agg.measure).value;
    CHECK(w <= agg.error_bound * (1 + 1e-9));
  }
  CHECK_THROWS_AS(aggregate(m, g, 5, 4), InvalidInput);
}
