#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "v2s/vlasov.hpp"

using namespace v2s;

namespace {

double gauss(double x, double s) { return std::exp(-0.5 * x * x / (s * s)); }

double max_diff(const RealVec& a, const RealVec& b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

double l1(const RealVec& a, const RealVec& b, const PhaseGrid& g) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r += std::abs(a[i] - b[i]);
  return r * g.weight() / (2 * kPi);
}

}  // namespace

TEST_CASE("density of separable and gaussian data") {
  const auto g = vlasov_grid(8.0, 32, 8.0, 128);
  RealVec zero(g.points(), 0.0);
  for (double r : density(zero, g)) CHECK(r == 0.0);
  RealVec m(g.points());
  double hsum = 0.0;
  for (int j = 0; j < g.np; ++j) hsum += gauss(g.p(j), 1.0) * g.dp;
  for (std::size_t z = 0; z < g.points(); ++z) m[z] = (1.0 + 0.5 * std::cos(g.q(z))) * gauss(g.p(z), 1.0);
  const auto rho = density(m, g);
  for (int i = 0; i < g.nq; ++i) {
    const double q = g.q(i * g.np);
    CHECK(rho[i] == doctest::Approx((1.0 + 0.5 * std::cos(q)) * hsum / (2 * kPi)).epsilon(1e-14));
    // closed form of the maxwellian integral
    CHECK(std::abs(rho[i] - (1.0 + 0.5 * std::cos(q)) / std::sqrt(2 * kPi)) <
          1e-6 * rho[i]);
  }
}

TEST_CASE("force field: uniform, point mass, direct vs fast, species swap") {
  const auto g = vlasov_grid(8.0, 64, 4.0, 16);
  const PotentialSet pots{Potential::gaussian(1.0, 0.7), Potential::gaussian(1.0, 0.7),
                          Potential::gaussian(0.6, 1.1)};
  const RealVec uni(g.nq, 0.125);
  for (auto method : {ConvolutionMethod::Direct, ConvolutionMethod::FFT}) {
    const auto F = force_field(uni, uni, pots, g, method);
    for (int i = 0; i < g.nq; ++i) {
      CHECK(std::abs(F.F1[i]) < 1e-14);
      CHECK(std::abs(F.F2[i]) < 1e-14);
    }
  }
  // point mass of weight n2 at q_5
  const double n2 = 0.4;
  RealVec pm(g.nq, 0.0), none(g.nq, 0.0);
  pm[5] = n2 / g.dq;
  const double q0 = g.q(5 * g.np);
  const auto F = force_field(none, pm, pots, g, ConvolutionMethod::Direct);
  for (int i = 0; i < g.nq; ++i) {
    const double x = g.q(i * g.np) - q0;
    const double ref = at_half_box(x, g.q_length()) ? 0.0 : n2 * pots.v12.grad(min_image(x, g.q_length()));
    CHECK(std::abs(F.F1[i] - ref) < 1e-14);
  }
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  RealVec r1(g.nq), r2(g.nq);
  for (int i = 0; i < g.nq; ++i) {
    r1[i] = u(rng);
    r2[i] = u(rng);
  }
  const auto a = force_field(r1, r2, pots, g, ConvolutionMethod::Direct);
  const auto b = force_field(r1, r2, pots, g, ConvolutionMethod::FFT);
  CHECK(max_diff(a.F1, b.F1) < 1e-10);
  CHECK(max_diff(a.F2, b.F2) < 1e-10);
  const auto s = force_field(r1, r1, pots, g);
  CHECK(max_diff(s.F1, s.F2) < 1e-14);
}

TEST_CASE("shift_line reproduces cubics away from the ends and copies whole-cell shifts") {
  const int n = 60;
  RealVec in(n), out(n);
  for (int i = 0; i < n; ++i) in[i] = 1.0 + 0.3 * i - 0.02 * i * i + 0.001 * i * i * i;
  shift_line(in.data(), out.data(), n, 0.37, false);
  for (int i = 20; i < 40; ++i) {
    const double x = i - 0.37;
    CHECK(out[i] == doctest::Approx(1.0 + 0.3 * x - 0.02 * x * x + 0.001 * x * x * x).epsilon(1e-9));
  }
  // periodic shifts keep the line sum
  RealVec w(n);
  for (int i = 0; i < n; ++i) w[i] = std::exp(std::sin(2 * kPi * i / n));
  shift_line(w.data(), out.data(), n, 2.71, true);
  double a = 0.0, b = 0.0;
  for (int i = 0; i < n; ++i) {
    a += w[i];
    b += out[i];
  }
  CHECK(std::abs(a - b) < 1e-12 * a);
  shift_line(in.data(), out.data(), n, -3.0, true);
  for (int i = 0; i < n; ++i) CHECK(out[i] == in[(i + 3) % n]);
}

TEST_CASE("free transport on grid-aligned shifts is exact") {
  // dq = 1/16, dp = 1/32, dt = 8: each p-line moves by 4 (j - 31.5) cells per step
  const auto g = vlasov_grid(8.0, 128, 1.0, 64);
  const ScalingContext ctx{1, 1, 1};
  auto s0 = make_distribution(
      g, ctx, [](double q, double p) { return gauss(q + 1, 0.5) * gauss(p - 0.2, 0.3); },
      [](double q, double p) { return gauss(q - 1, 0.4) * gauss(p, 0.3); });
  const VlasovSolver solver(PotentialSet::zero());
  const auto s1 = solver.step(s0, 8.0);
  bool exact = true;
  for (int i = 0; i < g.nq; ++i)
    for (int j = 0; j < g.np; ++j) {
      const int shift = static_cast<int>(std::lround(g.p(j) * 8.0 / g.dq));
      const int src = ((i - shift) % g.nq + g.nq) % g.nq;
      exact = exact && s1.m1[i * g.np + j] == s0.m1[src * g.np + j] &&
              s1.m2[i * g.np + j] == s0.m2[src * g.np + j];
    }
  CHECK(exact);

  // off-grid free transport stays within interpolation error of the exact shift
  const auto g2 = vlasov_grid(8.0, 128, 4.0, 64);
  auto f = [](double q, double p) { return gauss(q, 0.6) * gauss(p, 0.8); };
  auto s = make_distribution(g2, ScalingContext{1, 0, 1}, f, f);
  const double scale = s.m1[0] / f(g2.q(0), g2.p(0));
  const auto e0 = conserved_quantities(s, PotentialSet::zero());
  for (int k = 0; k < 10; ++k) s = solver.step(s, 0.1);
  double err = 0.0;
  for (std::size_t z = 0; z < g2.points(); ++z) {
    const double q = min_image(g2.q(z) - g2.p(z) * 1.0, 8.0);
    err = std::max(err, std::abs(s.m1[z] - scale * f(q, g2.p(z))));
  }
  CHECK(err < 1e-3 * scale);
  const auto e1 = conserved_quantities(s, PotentialSet::zero());
  CHECK(std::abs(e1.energy - e0.energy) < 1e-13);
  CHECK(std::abs(e1.mass1 - e0.mass1) < 1e-13);
}

TEST_CASE("conservation on the two-blob scenario") {
  const ScalingContext ctx{1, 1, 1};
  const auto s0 = two_blob_initial({}, ctx);
  const auto pots = two_blob_potentials();
  const VlasovSolver solver(pots);
  auto s = s0;
  const auto c0 = conserved_quantities(s0, pots);
  CHECK(c0.mass1 == doctest::Approx(0.5).epsilon(1e-14));
  for (int k = 0; k < 40; ++k) {
    const auto prev = conserved_quantities(s, pots);
    s = solver.step(s, 0.05);
    const auto c = conserved_quantities(s, pots);
    CHECK(std::abs(c.mass1 - prev.mass1) < 1e-8 * prev.mass1);
    CHECK(std::abs(c.mass2 - prev.mass2) < 1e-8 * prev.mass2);
  }
  const auto c = conserved_quantities(s, pots);
  CHECK(std::abs(c.momentum - c0.momentum) < 1e-6 * std::max(1.0, std::abs(c0.momentum)));
  CHECK(std::abs(c.energy - c0.energy) < 1e-4 * std::abs(c0.energy));
}

TEST_CASE("single species momentum over 100 steps") {
  const auto g = vlasov_grid(8.0, 64, 5.0, 64);
  const ScalingContext ctx{1, 0, 1};
  auto f = [](double q, double p) {
    return gauss(q - 0.5, 0.7) * gauss(p - 0.4, 0.6) + 0.5 * gauss(q + 1.5, 0.4) * gauss(p + 0.3, 0.5);
  };
  auto s = make_distribution(g, ctx, f, f);
  const PotentialSet pots{Potential::gaussian(1.0, 0.8), Potential::zero(), Potential::zero()};
  const VlasovSolver solver(pots);
  const double p0 = conserved_quantities(s, pots).momentum;
  for (int k = 0; k < 100; ++k) s = solver.step(s, 0.02);
  CHECK(std::abs(conserved_quantities(s, pots).momentum - p0) < 1e-6);
}

TEST_CASE("mirror symmetry of a two-species setup") {
  const auto g = vlasov_grid(8.0, 64, 4.0, 64);
  const ScalingContext ctx{1, 1, 1};
  auto f1 = [](double q, double p) { return gauss(q + 1.2, 0.5) * gauss(p - 0.4, 0.5); };
  auto f2 = [&](double q, double p) { return f1(-q, -p); };
  auto s = make_distribution(g, ctx, f1, f2);
  const PotentialSet pots{Potential::gaussian(1.0, 0.8), Potential::gaussian(1.0, 0.8),
                          Potential::gaussian(0.7, 1.0)};
  const VlasovSolver solver(pots);
  for (int k = 0; k < 20; ++k) {
    s = solver.step(s, 0.05);
    double dev = 0.0;
    for (int i = 0; i < g.nq; ++i)
      for (int j = 0; j < g.np; ++j)
        dev = std::max(dev, std::abs(s.m1[i * g.np + j] - s.m2[(g.nq - 1 - i) * g.np + (g.np - 1 - j)]));
    CHECK(dev < 1e-9);
  }
}

TEST_CASE("run driver and time self-convergence") {
  const ScalingContext ctx{1, 1, 1};
  TwoBlobScenario sc;
  const auto s0 = two_blob_initial(sc, ctx);
  const auto pots = two_blob_potentials();
  const auto tr0 = run(s0, pots, 0.0, 0.1, {0.0});
  REQUIRE(tr0.snapshots.size() == 1);
  CHECK(tr0.snapshots[0].m1 == s0.m1);

  const double T = 1.0;
  const auto a = run(s0, pots, T, 0.1, {T}).snapshots.back();
  const auto b = run(s0, pots, T, 0.05, {T}).snapshots.back();
  const auto c = run(s0, pots, T, 0.025, {T}).snapshots.back();
  CHECK(a.t == doctest::Approx(T));
  const double ratio = (l1(a.m1, b.m1, a.grid) + l1(a.m2, b.m2, a.grid)) /
                       (l1(b.m1, c.m1, a.grid) + l1(b.m2, c.m2, a.grid));
  MESSAGE("dt self-convergence ratio " << ratio);
  CHECK(ratio > 2.8);
  CHECK(ratio < 5.2);

  const auto tr = run(s0, pots, 0.5, 0.1, {0.0, 0.2, 0.5});
  CHECK(tr.snapshots.size() == 3);
  CHECK(tr.log.size() == 6);
  CHECK(tr.snapshots[1].t == doctest::Approx(0.2));
}

TEST_CASE("all-zero state and guarded failures") {
  const auto g = vlasov_grid(8.0, 16, 4.0, 16);
  SpeciesPairDistribution z;
  z.grid = g;
  z.ctx = ScalingContext{1, 1, 1};
  z.m1.assign(g.points(), 0.0);
  z.m2.assign(g.points(), 0.0);
  const auto c = conserved_quantities(z, two_blob_potentials());
  CHECK(c.mass1 == 0.0);
  CHECK(c.momentum == 0.0);
  CHECK(c.energy == 0.0);

  auto s = make_distribution(g, ScalingContext{1, 1, 1},
                             [](double q, double p) { return gauss(q, 0.5) * gauss(p, 0.5); },
                             [](double q, double p) { return gauss(q - 1, 0.5) * gauss(p, 0.5); });
  const auto gf = vlasov_grid(8.0, 128, 4.0, 16);
  auto sf = make_distribution(gf, ScalingContext{1, 0, 1},
                              [](double q, double p) { return gauss(q, 0.5) * gauss(p, 0.5); },
                              [](double, double) { return 0.0; });
  const PotentialSet stiff{Potential::gaussian(1e308, 0.1), Potential::zero(), Potential::zero()};
  CHECK_THROWS_AS(VlasovSolver(stiff).step(sf, 0.1), BlowUp);
  CHECK_THROWS_AS(VlasovSolver(PotentialSet::zero()).step(s, 10.0), InvalidInput);
}
