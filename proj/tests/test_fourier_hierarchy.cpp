#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "v2s/fourier_hierarchy.hpp"

using namespace v2s;

namespace {

struct Blob {
  double q0, p0, sq, sp;
  double density(double q, double p) const {
    const double a = (q - q0) / sq, b = (p - p0) / sp;
    return std::exp(-0.5 * (a * a + b * b));
  }
  cplx mu(double xi, double eta) const {
    return std::polar(std::exp(-0.5 * (sp * sp * xi * xi + sq * sq * eta * eta)), xi * p0 + eta * q0);
  }
};

// Closed-form factorised family of two gaussian species, interaction picture at time t.
class GaussianSource : public CharSource {
 public:
  GaussianSource(Blob a, Blob b, double t = 0.0) : a_(a), b_(b), t_(t) {}
  cplx value(int k, int l, const double* args) const override {
    cplx r = 1.0;
    for (int s = 0; s < k + l; ++s) {
      const Blob& f = s < k ? a_ : b_;
      r *= f.mu(args[2 * s] - args[2 * s + 1] * t_, args[2 * s + 1]);
    }
    return r;
  }

 private:
  Blob a_, b_;
  double t_;
};

PotentialSet band_pots() {
  return {Potential::band_limited(0.02, 2.0), Potential::band_limited(0.015, 2.0),
          Potential::band_limited(-0.01, 2.0)};
}

RealVec sample(const PhaseGrid& g, const Blob& b) {
  RealVec m(g.points());
  for (std::size_t z = 0; z < g.points(); ++z) m[z] = b.density(g.q(z), g.p(z));
  return m;
}

}  // namespace

TEST_CASE("characteristic function of a point mass") {
  const auto g = vlasov_grid(8.0, 32, 4.0, 32);
  RealVec m(g.points(), 0.0);
  const std::size_t z0 = 17 * 32 + 9;
  m[z0] = 2 * kPi * 0.5 / g.weight();
  FourierGrid fg;
  const auto c = to_characteristic(m, g, 0.5, 1, fg);
  const auto probes = probe_box(fg, 1);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const cplx ref = std::polar(1.0, probes[i][0] * g.p(z0) + probes[i][1] * g.q(z0));
    REQUIRE(std::abs(c.values[i] - ref) < 1e-12);
  }
}

TEST_CASE("characteristic function of a centred gaussian") {
  const auto g = vlasov_grid(12.0, 96, 5.0, 96);
  const Blob b{0.0, 0.0, 0.6, 0.8};
  const ScalingContext ctx{1, 1, 1};
  auto d = make_distribution(g, ctx, [&](double q, double p) { return b.density(q, p); },
                             [&](double q, double p) { return b.density(q, p); });
  FourierGrid fg;
  const auto c = to_characteristic(d.m1, g, ctx.n1(), 1, fg);
  const auto probes = probe_box(fg, 1);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const cplx ref = b.mu(probes[i][0], probes[i][1]);
    CHECK(std::abs(c.values[i].imag()) < 1e-10);
    CHECK(c.values[i].real() > 0.0);
    CHECK(std::abs(c.values[i] - ref) <= 1e-4 * std::abs(ref) + 1e-12);
    CHECK(std::abs(c.values[i]) <= 1.0 + 1e-6);
  }
  CHECK_THROWS_AS(to_characteristic(d.m1, g, 0.25, 1, fg), NormalizationGap);
}

TEST_CASE("one-particle table reproduces the direct sum") {
  const auto g = vlasov_grid(12.0, 96, 5.0, 96);
  const Blob b{0.7, -0.4, 0.5, 0.6};
  const ScalingContext ctx{1, 1, 1};
  auto d = make_distribution(g, ctx, [&](double q, double p) { return b.density(q, p); },
                             [&](double q, double p) { return b.density(q, p); });
  const OneParticleChar tab(d.m1, g, 0.5, 10.0, 10.0, 0.05);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-9.0, 9.0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double xi = u(rng), eta = u(rng);
    worst = std::max(worst, std::abs(tab(xi, eta) - characteristic_value(d.m1, g, 0.5, xi, eta)));
  }
  CHECK(worst < 1e-5);
  CHECK_THROWS_AS(tab(11.0, 0.0), ExtrapolationNeeded);
}

TEST_CASE("interaction picture shifts") {
  const GaussianSource src({0.3, 0.2, 0.7, 0.9}, {-0.4, -0.1, 0.8, 0.7});
  const ScalingContext ctx{1, 1, 1};
  FourierGrid fg{4.0, 33};
  const auto fam = sample_family(src, fg, ctx, 2);
  const auto same = interaction_rep(fam, 0.0);
  for (const auto& [key, lev] : fam.levels)
    for (std::size_t i = 0; i < lev.values.size(); ++i)
      REQUIRE(std::abs(same.at(key.first, key.second).values[i] - lev.values[i]) < 1e-14);
  CHECK_THROWS_AS(interaction_rep(fam, 0.1), ExtrapolationNeeded);
  double frac = 0.0;
  const auto a = interaction_rep(interaction_rep(fam, 0.05, 1.0), 0.05, 1.0);
  const auto b = interaction_rep(fam, 0.1, 1.0, &frac);
  CHECK(frac > 0.0);
  CHECK(frac < 0.5);
  // compare on nodes that stay well inside the box
  const GaussianSource exact({0.3, 0.2, 0.7, 0.9}, {-0.4, -0.1, 0.8, 0.7}, 0.1);
  const auto probes = probe_box(fg, 1);
  const auto& la = a.at(1, 0), &lb = b.at(1, 0);
  double dev = 0.0, err = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (std::abs(probes[i][0]) + 0.2 * std::abs(probes[i][1]) > 3.5) continue;
    dev = std::max(dev, std::abs(la.values[i] - lb.values[i]));
    err = std::max(err, std::abs(lb.values[i] - exact.value(1, 0, probes[i].data())));
  }
  CHECK(dev < 2e-3);
  CHECK(err < 2e-3);
  for (const auto& v : lb.values) CHECK(std::abs(v) <= 1.0 + 1e-2);
}

TEST_CASE("free transport is removed by the interaction picture") {
  const auto g = vlasov_grid(16.0, 128, 5.0, 128);
  const ScalingContext ctx{1, 1, 1};
  const Blob b1{-1.0, 0.4, 0.5, 0.5}, b2{1.0, -0.3, 0.5, 0.5};
  const auto d0 = make_distribution(g, ctx, [&](double q, double p) { return b1.density(q, p); },
                                    [&](double q, double p) { return b2.density(q, p); });
  const double T = 0.8;
  const auto traj = run(d0, PotentialSet::zero(), T, 0.05, {T});
  const auto& dT = traj.snapshots.back();
  const OneParticleChar m0(d0.m1, g, 0.5, 8.0, 5.0, 0.05), mT(dT.m1, g, 0.5, 8.0, 5.0, 0.05);
  double dev = 0.0;
  for (const auto& pr : probe_box(FourierGrid{}, 1)) dev = std::max(dev, std::abs(mT.at(pr[0], pr[1], T) - m0(pr[0], pr[1])));
  CHECK(dev < 1e-3);
}

TEST_CASE("K vanishes without interaction and needs band-limited potentials") {
  const GaussianSource src({0.3, 0.2, 0.7, 0.9}, {-0.4, -0.1, 0.8, 0.7});
  const ScalingContext ctx{2, 1, 1};
  const double args[4] = {0.5, -1.0, 1.5, 2.0};
  CHECK(apply_K_at(src, 1, 1, args, 0.3, PotentialSet::zero(), ctx) == cplx(0.0));
  const PotentialSet gauss{Potential::gaussian(1.0, 1.0), Potential::zero(), Potential::zero()};
  CHECK_THROWS_AS(apply_K_at(src, 1, 0, args, 0.3, gauss, ctx), BandLimitRequired);
  CHECK_THROWS_AS(picard_constants(gauss, FourierGrid{}), BandLimitRequired);
}

TEST_CASE("single species K against a directly coded branch") {
  const Blob b{0.3, 0.2, 0.7, 0.9};
  const GaussianSource src(b, b);
  const ScalingContext ctx{3, 0, 1};
  const Potential v = Potential::band_limited(0.05, 1.5);
  const PotentialSet pots{v, Potential::zero(), Potential::zero()};
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double xi = u(rng), eta = u(rng), t = 0.1 * trial;
    // Simpson rule on [-B, B] with the kink at 0 on a node
    const int n = 4000;
    const double B = 1.5, h = 2 * B / n;
    cplx ref = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double z = -B + i * h;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      const double a2[4] = {xi + z * t, eta + z, -z * t, -z};
      ref += w * v.fourier(z) * z * (xi - eta * t) * src.value(2, 0, a2);
    }
    ref *= h / 3.0;
    const double a1[2] = {xi, eta};
    CHECK(std::abs(apply_K_at(src, 1, 0, a1, t, pots, ctx) - ref) < 1e-10);
  }
}

TEST_CASE("K is linear in the family") {
  const ScalingContext ctx{1, 1, 1};
  FourierGrid fg{4.0, 13};
  const auto F = sample_family(GaussianSource({0.3, 0.2, 0.7, 0.9}, {-0.4, -0.1, 0.8, 0.7}), fg, ctx, 2);
  const auto G = sample_family(GaussianSource({-0.5, 0.1, 0.6, 0.8}, {0.2, 0.3, 0.9, 0.6}), fg, ctx, 2);
  const cplx a(0.7, -0.2), b(-1.3, 0.4);
  CharFamily H = F;
  for (auto& [key, lev] : H.levels)
    for (std::size_t i = 0; i < lev.values.size(); ++i)
      lev.values[i] = a * lev.values[i] + b * G.at(key.first, key.second).values[i];
  const auto pots = band_pots();
  const auto kF = apply_K(F, 0.2, pots, 17, OutOfBox::Zero);
  const auto kG = apply_K(G, 0.2, pots, 17, OutOfBox::Zero);
  const auto kH = apply_K(H, 0.2, pots, 17, OutOfBox::Zero);
  CHECK(kH.max_order == 1);
  for (const auto& [key, lev] : kH.levels)
    for (std::size_t i = 0; i < lev.values.size(); ++i) {
      const cplx ref = a * kF.at(key.first, key.second).values[i] + b * kG.at(key.first, key.second).values[i];
      REQUIRE(std::abs(lev.values[i] - ref) < 1e-10);
    }
}

TEST_CASE("time derivative of Vlasov characteristics") {
  const auto g = vlasov_grid(12.0, 128, 4.0, 128);
  const ScalingContext ctx{1, 1, 1};
  const Blob b1{-1.0, 0.3, 0.5, 0.5}, b2{1.0, -0.3, 0.5, 0.5};
  const auto d0 = make_distribution(g, ctx, [&](double q, double p) { return b1.density(q, p); },
                                    [&](double q, double p) { return b2.density(q, p); });
  const auto pots = PotentialSet{Potential::band_limited(0.2, 2.0), Potential::band_limited(0.15, 2.0),
                                 Potential::band_limited(-0.1, 2.0)};
  const double t = 0.3, delta = 0.02;
  const auto traj = run(d0, pots, t + delta, 0.005, {t - delta, t, t + delta});
  auto table = [&](const SpeciesPairDistribution& d, int alpha) {
    return OneParticleChar(d.species(alpha), g, 0.5, 10.0, 8.0, 0.04);
  };
  const auto a1 = table(traj.snapshots[0], 1), a2 = table(traj.snapshots[0], 2);
  const auto c1 = table(traj.snapshots[1], 1), c2 = table(traj.snapshots[1], 2);
  const auto b1t = table(traj.snapshots[2], 1), b2t = table(traj.snapshots[2], 2);
  const FactorizedSource mid(&c1, &c2, t);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0, scale = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double args[2] = {u(rng), u(rng)};
    const cplx fd = (b1t.at(args[0], args[1], t + delta) - a1.at(args[0], args[1], t - delta)) / (2 * delta);
    const cplx k = apply_K_at(mid, 1, 0, args, t, pots, ctx);
    worst = std::max(worst, std::abs(fd - k));
    scale = std::max(scale, std::abs(k));
    const cplx fd2 = (b2t.at(args[0], args[1], t + delta) - a2.at(args[0], args[1], t - delta)) / (2 * delta);
    const cplx k2 = apply_K_at(mid, 0, 1, args, t, pots, ctx);
    worst = std::max(worst, std::abs(fd2 - k2));
  }
  CHECK(scale > 1e-2);
  CHECK(worst < 1e-2 * scale);
}

TEST_CASE("Picard series basics") {
  const GaussianSource src({0.3, 0.2, 0.7, 0.9}, {-0.4, -0.1, 0.8, 0.7});
  const ScalingContext ctx{1, 1, 1};
  const auto probes = probe_box(FourierGrid{4.0, 5}, 1);
  auto cfg = picard_config(band_pots(), FourierGrid{}, 0.2, 1);
  const auto one = picard_iterate(src, 1, 0, probes, cfg, band_pots(), ctx);
  for (std::size_t p = 0; p < probes.size(); ++p) REQUIRE(one.sum[p] == src.value(1, 0, probes[p].data()));
  auto free_cfg = picard_config(PotentialSet::zero(), FourierGrid{}, 5.0, 4);
  CHECK(std::isinf(free_cfg.horizon));
  const auto free = picard_iterate(src, 1, 0, probes, free_cfg, PotentialSet::zero(), ctx);
  for (std::size_t p = 0; p < probes.size(); ++p) REQUIRE(free.sum[p] == src.value(1, 0, probes[p].data()));
  CHECK(delta_L_bound(free_cfg, 1, 0) == 0.0);
  cfg.t = 2.0 * cfg.horizon;
  CHECK_THROWS_AS(picard_iterate(src, 1, 0, probes, cfg, band_pots(), ctx), InvalidInput);
  // a stored family without closure cannot feed deep terms
  FourierGrid fg{4.0, 9};
  const auto fam = sample_family(src, fg, ctx, 2);
  const FamilySource stored(fam, OutOfBox::Zero);
  auto deep = picard_config(band_pots(), FourierGrid{}, 0.1, 3);
  deep.schedule = {{2, 4}};
  CHECK_THROWS_AS(picard_iterate(stored, 1, 0, {probes[0]}, deep, band_pots(), ctx), DepthExceedsFamily);
  const FamilySource closed(fam, OutOfBox::Zero, &src);
  CHECK_NOTHROW(picard_iterate(closed, 1, 0, {probes[0]}, deep, band_pots(), ctx));
}

TEST_CASE("truncation bound") {
  const auto pots = band_pots();
  const auto c = picard_constants(pots, FourierGrid{});
  CHECK(c.A == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(c.B == 2.0);
  CHECK(c.support_volume == 4.0);
  const double tau = horizon_tau(c);
  CHECK(tau == doctest::Approx(1.0 / std::sqrt(16 * c.A * 4.0)));
  double prev = 1e300;
  bool decreasing_tail = true;
  for (int L = 1; L <= 40; ++L) {
    auto cfg = picard_config(pots, FourierGrid{}, tau / 2, L);
    const double b = delta_L_bound(cfg, 1, 0);
    if (L > 6 && !(b < prev)) decreasing_tail = false;
    prev = b;
  }
  CHECK(decreasing_tail);
  CHECK(prev < 1e-6);
  // measured terms stay below the bound
  const GaussianSource src({0.3, 0.2, 0.7, 0.9}, {-0.4, -0.1, 0.8, 0.7});
  const ScalingContext ctx{1, 1, 1};
  const auto probes = probe_box(FourierGrid{4.0, 3}, 1);
  auto cfg = picard_config(pots, FourierGrid{}, tau / 2, 4);
  cfg.schedule = {{4, 12}, {3, 6}, {2, 4}};
  const auto r = picard_iterate(src, 1, 0, probes, cfg, pots, ctx);
  for (int L = 1; L < 4; ++L) {
    auto cl = cfg;
    cl.depth = L;
    CAPTURE(L);
    CHECK(r.term_sup(L) <= delta_L_bound(cl, 1, 0));
    CHECK(r.term_sup(L) > 0.0);
  }
}
