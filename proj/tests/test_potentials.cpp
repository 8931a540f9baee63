#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "v2s/potentials.hpp"

using namespace v2s;

namespace {

// Central finite difference of V.
double fd_grad(const Potential& p, double x, double h = 1e-6) {
  return (p.value(x + h) - p.value(x - h)) / (2 * h);
}

// (2 pi)^-1 int V(x) e^{-i eta x} dx by the trapezoid rule on [-L, L].
double transform_by_quadrature(const Potential& p, double eta, double L, int n) {
  const double h = 2 * L / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = -L + i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * p.value(x) * std::cos(eta * x);
  }
  return s * h / (2 * kPi);
}

// int Vhat(eta) e^{i eta x} d eta, trapezoid over the support.
double inverse_by_quadrature(const Potential& p, double x, int n) {
  const double B = p.width_or_bandlimit();
  const double h = 2 * B / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double e = -B + i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * p.fourier(e) * std::cos(e * x);
  }
  return s * h;
}

}  // namespace

TEST_CASE("gaussian values, gradient and transform") {
  const auto g = Potential::gaussian(1.0, 1.0);
  CHECK(g.value(0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.grad(1.0) == doctest::Approx(-std::exp(-0.5)).epsilon(1e-14));
  CHECK(std::abs(g.grad(1.0) - fd_grad(g, 1.0)) < 1e-8);
  CHECK(g.grad(0.0) == 0.0);
  for (double eta : {0.0, 0.5, 1.0, 2.0}) {
    const double ref = transform_by_quadrature(g, eta, 20.0, 20000);
    CHECK(std::abs(g.fourier(eta) - ref) <= 1e-4 * std::abs(ref) + 1e-14);
  }
  CHECK_FALSE(g.band_limited());
  // A = sup |eta Vhat| attained at eta = 1/w
  CHECK(g.fourier_amp() >= std::exp(-0.5) / std::sqrt(2 * kPi));
  CHECK(g.fourier_amp() <= 1.001 * std::exp(-0.5) / std::sqrt(2 * kPi));
}

TEST_CASE("band-limited potential") {
  const auto b = Potential::band_limited(1.0, 2.0);
  // value at zero equals int Vhat
  CHECK(std::abs(b.value(0.0) - inverse_by_quadrature(b, 0.0, 10000)) < 1e-6);
  CHECK(b.fourier(3.0) == 0.0);
  CHECK(b.fourier(-3.0) == 0.0);
  CHECK(b.fourier(2.0000001) == 0.0);
  CHECK(b.band_limited());
  CHECK(std::abs(b.fourier_band() - 2.0) <= 2.0 / 4000 + 1e-12);
  // sup eta (1 - eta/2) = 1/2 at eta = 1
  CHECK(b.fourier_amp() == doctest::Approx(0.5).epsilon(1e-3));
  // reconstruction from the transform
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng);
    CHECK(std::abs(b.value(x) - inverse_by_quadrature(b, x, 20000)) < 1e-6);
  }
  // transform at zero is (2 pi)^-1 int V; the 1/x^2 tail needs a long window
  const double ref0 = transform_by_quadrature(b, 0.0, 4000.0, 4000000);
  CHECK(std::abs(b.fourier(0.0) - ref0) < 2e-4);
}

TEST_CASE("evenness, oddness and finite-difference gradients at random points") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (const auto& p : {Potential::gaussian(0.7, 0.8), Potential::band_limited(0.3, 1.7),
                        Potential::zero()}) {
    for (int i = 0; i < 100; ++i) {
      const double x = u(rng);
      CHECK(std::abs(p.value(x) - p.value(-x)) <= 1e-12);
      CHECK(std::abs(p.grad(x) + p.grad(-x)) <= 1e-12);
      const double ref = fd_grad(p, x, 1e-5);
      CHECK(std::abs(p.grad(x) - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
      CHECK(std::abs(p.grad(x)) <= p.sup_grad());
      const double y = u(rng);
      if (std::abs(x - y) > 1e-3)
        CHECK(std::abs(p.grad(x) - p.grad(y)) / std::abs(x - y) <= p.lipschitz_grad() + 1e-12);
    }
  }
}

TEST_CASE("band-limited gradient near the origin uses the series branch consistently") {
  const auto b = Potential::band_limited(1.0, 2.0);
  for (double x : {1e-9, 1e-5, 0.02, 0.049, 0.051, 0.1}) {
    CHECK(std::abs(b.grad(x) - fd_grad(b, x, 1e-5)) < 1e-8);
    const double h = 1e-4;
    const double fd2 = (b.grad(x + h) - b.grad(x - h)) / (2 * h);
    CHECK(std::abs(b.curvature(x) - fd2) < 1e-6);
  }
}

TEST_CASE("multi-dimensional potentials") {
  const auto g = Potential::gaussian(1.0, 1.0, 2);
  double x[2] = {0.3, -0.4}, gr[2];
  g.grad(x, gr);
  CHECK(gr[0] == doctest::Approx(-0.3 * std::exp(-0.125)));
  const auto b = Potential::band_limited(1.0, 2.0, 2);
  CHECK(b.fourier_band() == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-3));
  CHECK(b.support_volume() == doctest::Approx(16.0));
  double e[2] = {1.0, 1.9};
  CHECK(b.fourier(e) == doctest::Approx(0.5 * 0.05));
  for (double& v : x) v = -v;
  double gm[2];
  b.grad(x, gm);
  for (double& v : x) v = -v;
  b.grad(x, gr);
  CHECK(std::abs(gr[0] + gm[0]) < 1e-14);
}

TEST_CASE("assumption report") {
  auto z = validate_assumptions(PotentialSet::zero(), true);
  CHECK(z.all_pass());
  CHECK(z.A() == 0.0);
  CHECK(z.B() == 0.0);
  CHECK(z.band_limit_status == "MET");

  PotentialSet gs{Potential::gaussian(1, 1), Potential::gaussian(1, 1), Potential::gaussian(1, 1)};
  auto gr = validate_assumptions(gs, true);
  CHECK(gr.entries[0].even);
  CHECK(gr.entries[0].fourier_c0);
  CHECK_FALSE(gr.entries[0].band_limited);
  CHECK(gr.band_limit_status == "UNMET");
  CHECK(validate_assumptions(gs, false).band_limit_status == "not requested");

  PotentialSet bs{Potential::band_limited(1, 2), Potential::band_limited(1, 2),
                  Potential::band_limited(1, 2)};
  auto br = validate_assumptions(bs, true);
  CHECK(br.band_limit_status == "MET");
  CHECK(std::abs(br.B() - 2.0) <= 2.0 / 4000 + 1e-12);
  CHECK(&bs.v21() == &bs.v12);
}
