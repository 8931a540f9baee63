#include "v2s/vlasov.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>

namespace v2s {

namespace {

void require_1d(const PhaseGrid& g) {
  if (g.d != 1) throw InvalidInput("the kinetic solver is one-dimensional");
}

}  // namespace

SpeciesPairDistribution make_distribution(const PhaseGrid& grid, const ScalingContext& ctx,
                                          const std::function<double(double, double)>& f1,
                                          const std::function<double(double, double)>& f2) {
  require_1d(grid);
  SpeciesPairDistribution s;
  s.grid = grid;
  s.ctx = ctx;
  const std::size_t n = grid.points();
  for (int alpha : {1, 2}) {
    auto& m = s.species(alpha);
    m.assign(n, 0.0);
    const double target = alpha == 1 ? ctx.n1() : ctx.n2();
    if (target == 0.0) continue;
    const auto& f = alpha == 1 ? f1 : f2;
    for (std::size_t z = 0; z < n; ++z) m[z] = f(grid.q(z), grid.p(z));
    const double mass = species_mass(m, grid);
    if (!(mass > 0.0)) throw InvalidInput("initial density has no mass on the grid");
    for (auto& v : m) v *= target / mass;
  }
  return s;
}

RealVec density(const RealVec& m, const PhaseGrid& grid) {
  require_1d(grid);
  RealVec rho(grid.nq, 0.0);
  for (int i = 0; i < grid.nq; ++i) {
    double acc = 0.0;
    for (int j = 0; j < grid.np; ++j) acc += m[static_cast<std::size_t>(i) * grid.np + j];
    rho[i] = acc * grid.dp / (2.0 * kPi);
  }
  return rho;
}

double species_mass(const RealVec& m, const PhaseGrid& grid) {
  double acc = 0.0;
  for (double v : m) acc += v;
  return acc * grid.weight() / std::pow(2.0 * kPi, grid.d);
}

RealVec convolve_grad(const Potential& v, const RealVec& rho, const PhaseGrid& grid,
                      ConvolutionMethod method) {
  const int n = grid.nq;
  const double L = grid.q_length();
  RealVec kern(n);
  for (int j = 0; j < n; ++j) {
    const double x = j * grid.dq;
    kern[j] = at_half_box(x, L) ? 0.0 : v.grad(min_image(x, L));
  }
  RealVec out(n, 0.0);
  if (v.kind() == PotentialKind::Zero) return out;
  if (method == ConvolutionMethod::Direct) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += kern[((i - j) % n + n) % n] * rho[j];
      out[i] = acc * grid.dq;
    }
    return out;
  }
  const int nc = n / 2 + 1;
  std::vector<double> a(kern), b(rho), c(n);
  fftw_complex* A = fftw_alloc_complex(nc);
  fftw_complex* B = fftw_alloc_complex(nc);
  fftw_plan pa = fftw_plan_dft_r2c_1d(n, a.data(), A, FFTW_ESTIMATE);
  fftw_plan pb = fftw_plan_dft_r2c_1d(n, b.data(), B, FFTW_ESTIMATE);
  fftw_execute(pa);
  fftw_execute(pb);
  for (int k = 0; k < nc; ++k) {
    const double re = A[k][0] * B[k][0] - A[k][1] * B[k][1];
    const double im = A[k][0] * B[k][1] + A[k][1] * B[k][0];
    A[k][0] = re;
    A[k][1] = im;
  }
  fftw_plan pc = fftw_plan_dft_c2r_1d(n, A, c.data(), FFTW_ESTIMATE);
  fftw_execute(pc);
  for (int i = 0; i < n; ++i) out[i] = c[i] * grid.dq / n;
  fftw_destroy_plan(pa);
  fftw_destroy_plan(pb);
  fftw_destroy_plan(pc);
  fftw_free(A);
  fftw_free(B);
  return out;
}

ForceField force_field(const RealVec& rho1, const RealVec& rho2, const PotentialSet& pots,
                       const PhaseGrid& grid, ConvolutionMethod method) {
  require_1d(grid);
  ForceField f;
  const RealVec a = convolve_grad(pots.v11, rho1, grid, method);
  const RealVec b = convolve_grad(pots.v12, rho2, grid, method);
  const RealVec c = convolve_grad(pots.v22, rho2, grid, method);
  const RealVec e = convolve_grad(pots.v21(), rho1, grid, method);
  f.F1.resize(grid.nq);
  f.F2.resize(grid.nq);
  for (int i = 0; i < grid.nq; ++i) {
    f.F1[i] = a[i] + b[i];
    f.F2[i] = c[i] + e[i];
  }
  return f;
}

namespace {

// Cubic B-spline coefficients c with (c[i-1] + 4 c[i] + c[i+1]) / 6 = f[i]; outside
// values are zero (open) or wrapped (periodic).
void spline_coefficients(const double* f, std::ptrdiff_t stride, int n, bool periodic,
                         std::vector<double>& c) {
  const double a = 1.0 / 6.0, b = 4.0 / 6.0;
  std::vector<double> cp(n), dp(n);
  auto thomas = [&](const std::vector<double>& rhs, std::vector<double>& x) {
    cp[0] = a / b;
    dp[0] = rhs[0] / b;
    for (int i = 1; i < n; ++i) {
      const double m = b - a * cp[i - 1];
      cp[i] = a / m;
      dp[i] = (rhs[i] - a * dp[i - 1]) / m;
    }
    x[n - 1] = dp[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = dp[i] - cp[i] * x[i + 1];
  };
  std::vector<double> rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = f[i * stride];
  c.assign(n, 0.0);
  if (!periodic) {
    thomas(rhs, c);
    return;
  }
  // cyclic system by Sherman-Morrison: A = T + u v^T with corner entries a
  const double gamma = -b;
  std::vector<double> rhs_mod(rhs), u(n, 0.0), y(n), z(n);
  // modified diagonal at both ends
  const double b0 = b - gamma, bn = b - a * a / gamma;
  auto thomas_mod = [&](const std::vector<double>& r, std::vector<double>& x) {
    cp[0] = a / b0;
    dp[0] = r[0] / b0;
    for (int i = 1; i < n; ++i) {
      const double diag = i == n - 1 ? bn : b;
      const double m = diag - a * cp[i - 1];
      cp[i] = a / m;
      dp[i] = (r[i] - a * dp[i - 1]) / m;
    }
    x[n - 1] = dp[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = dp[i] - cp[i] * x[i + 1];
  };
  thomas_mod(rhs_mod, y);
  u[0] = gamma;
  u[n - 1] = a;
  thomas_mod(u, z);
  const double fact = (y[0] + a * y[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
  for (int i = 0; i < n; ++i) c[i] = y[i] - fact * z[i];
}

}  // namespace

void shift_line(const double* in, double* out, int n, double s, bool periodic,
                std::ptrdiff_t stride) {
  if (!periodic && std::abs(s) > n + 2.0) {
    for (int i = 0; i < n; ++i) out[i * stride] = 0.0;
    return;
  }
  const double r = std::round(s);
  if (std::abs(s - r) < 1e-9) {
    const long k = static_cast<long>(r);
    for (int i = 0; i < n; ++i) {
      const long j = i - k;
      if (periodic)
        out[i * stride] = in[(((j % n) + n) % n) * stride];
      else
        out[i * stride] = (j < 0 || j >= n) ? 0.0 : in[j * stride];
    }
    return;
  }
  std::vector<double> c;
  spline_coefficients(in, stride, n, periodic, c);
  auto coef = [&](long j) -> double {
    if (periodic) return c[((j % n) + n) % n];
    return (j < 0 || j >= n) ? 0.0 : c[j];
  };
  // evaluate at x = i - s; with x = j + t, t in [0, 1), the B-splines centred at
  // j-1 .. j+2 contribute
  const double fl = std::floor(-s);
  const double t = -s - fl;
  const double t2 = t * t, t3 = t2 * t, u = 1.0 - t;
  const double bm = u * u * u / 6.0;
  const double b0 = (3 * t3 - 6 * t2 + 4) / 6.0;
  const double b1 = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0;
  const double b2 = t3 / 6.0;
  const long k = static_cast<long>(fl);
  for (int i = 0; i < n; ++i) {
    const long j = i + k;
    out[i * stride] = bm * coef(j - 1) + b0 * coef(j) + b1 * coef(j + 1) + b2 * coef(j + 2);
  }
}

VlasovSolver::VlasovSolver(PotentialSet pots, ConvolutionMethod method)
    : pots_(std::move(pots)), method_(method) {}

namespace {

void advect_q(RealVec& m, const PhaseGrid& g, double tau) {
  RealVec out(m.size());
  for (int j = 0; j < g.np; ++j) {
    const double s = g.p(j) * tau / g.dq;
    shift_line(m.data() + j, out.data() + j, g.nq, s, true, g.np);
  }
  m.swap(out);
}

void advect_p(RealVec& m, const PhaseGrid& g, const RealVec& F, double dt) {
  RealVec out(m.size());
  for (int i = 0; i < g.nq; ++i) {
    // dp/dt = -F: m_new(p) = m_old(p + F dt)
    const double s = -F[i] * dt / g.dp;
    const std::size_t off = static_cast<std::size_t>(i) * g.np;
    shift_line(m.data() + off, out.data() + off, g.np, s, false, 1);
  }
  m.swap(out);
}

// Zero values below -1e-10, then restore the line-summed mass and momentum with an
// affine-in-p factor on the remaining values. Returns the removed mass.
double clip(RealVec& m, const PhaseGrid& g) {
  double M0 = 0.0, P0 = 0.0, removed = 0.0;
  for (std::size_t z = 0; z < m.size(); ++z) {
    M0 += m[z];
    P0 += g.p(z) * m[z];
  }
  for (auto& v : m)
    if (v < -1e-10) {
      removed -= v;
      v = 0.0;
    }
  if (removed == 0.0) return 0.0;
  double M1 = 0.0, P1 = 0.0, S2 = 0.0;
  for (std::size_t z = 0; z < m.size(); ++z) {
    const double p = g.p(z);
    M1 += m[z];
    P1 += p * m[z];
    S2 += p * p * m[z];
  }
  // (1 + a) M1 + b P1 = M0,  a P1 + b S2 = P0 - P1
  const double det = M1 * S2 - P1 * P1;
  if (M1 > 0.0 && det > 0.0) {
    const double a = ((M0 - M1) * S2 - (P0 - P1) * P1) / det;
    const double b = (M1 * (P0 - P1) - P1 * (M0 - M1)) / det;
    for (std::size_t z = 0; z < m.size(); ++z) m[z] *= 1.0 + a + b * g.p(z);
  }
  return removed * g.weight() / (2.0 * kPi);
}

double max_abs(const RealVec& m) {
  double r = 0.0;
  for (double v : m) r = std::max(r, std::abs(v));
  return r;
}

}  // namespace

SpeciesPairDistribution VlasovSolver::step(const SpeciesPairDistribution& s, double dt,
                                           StepLog* log) const {
  require_1d(s.grid);
  const auto& g = s.grid;
  if (std::abs(dt) * g.p_max() > g.q_length() * (1 + 1e-12))
    throw InvalidInput("time step moves the fastest momentum beyond the q domain");
  if (ref_max_ == 0.0) ref_max_ = std::max(max_abs(s.m1), max_abs(s.m2));
  SpeciesPairDistribution r = s;
  for (int alpha : {1, 2}) advect_q(r.species(alpha), g, 0.5 * dt);
  if (!pots_.all_zero()) {
    const auto F = force_field(density(r.m1, g), density(r.m2, g), pots_, g, method_);
    for (int i = 0; i < g.nq; ++i)
      if (!std::isfinite(F.F1[i]) || !std::isfinite(F.F2[i]))
        throw BlowUp("non-finite force at t = " + std::to_string(s.t));
    advect_p(r.m1, g, F.F1, dt);
    advect_p(r.m2, g, F.F2, dt);
  }
  for (int alpha : {1, 2}) advect_q(r.species(alpha), g, 0.5 * dt);
  double clipped = 0.0;
  for (int alpha : {1, 2}) clipped += clip(r.species(alpha), g);
  if (log) log->clipped_mass = clipped;
  const double mx = std::max(max_abs(r.m1), max_abs(r.m2));
  if (!std::isfinite(mx) || mx > 1e3 * ref_max_)
    throw BlowUp("phase-space density exceeded 1000 times its initial maximum at t = " +
                 std::to_string(s.t + dt));
  r.t = s.t + dt;
  return r;
}

Conserved conserved_quantities(const SpeciesPairDistribution& s, const PotentialSet& pots) {
  const auto& g = s.grid;
  Conserved c;
  const double w = g.weight() / (2.0 * kPi);
  double kin = 0.0, mom = 0.0;
  for (int alpha : {1, 2}) {
    const auto& m = s.species(alpha);
    double mass = 0.0;
    for (std::size_t z = 0; z < m.size(); ++z) {
      const double p = g.p(z);
      mass += m[z];
      mom += p * m[z];
      kin += 0.5 * p * p * m[z];
    }
    (alpha == 1 ? c.mass1 : c.mass2) = mass * w;
  }
  c.momentum = mom * w;
  const RealVec r1 = density(s.m1, g), r2 = density(s.m2, g);
  const double L = g.q_length();
  double pot = 0.0;
  for (int i = 0; i < g.nq; ++i)
    for (int j = 0; j < g.nq; ++j) {
      const double x = min_image((i - j) * g.dq, L);
      pot += 0.5 * r1[i] * r1[j] * pots.v11.value(x) + 0.5 * r2[i] * r2[j] * pots.v22.value(x) +
             r1[i] * r2[j] * pots.v12.value(x);
    }
  c.energy = kin * w + pot * g.dq * g.dq;
  return c;
}

Trajectory run(const SpeciesPairDistribution& initial, const PotentialSet& pots, double T, double dt,
               const std::vector<double>& snapshot_times, ConvolutionMethod method) {
  if (!(dt > 0.0) || T < 0.0) throw InvalidInput("run needs dt > 0 and T >= 0");
  Trajectory tr;
  const long n = T == 0.0 ? 0 : static_cast<long>(std::ceil(T / dt - 1e-9));
  const double h = n > 0 ? T / n : 0.0;
  std::vector<long> snap;
  for (double t : snapshot_times) {
    if (t < -1e-12 || t > T + 1e-9) throw InvalidInput("snapshot time outside [0, T]");
    snap.push_back(n > 0 ? std::lround(t / h) : 0);
  }
  VlasovSolver solver(pots, method);
  auto cur = initial;
  auto record = [&](long i, double clipped) {
    tr.log.push_back({cur.t, conserved_quantities(cur, pots), clipped});
    for (long k : snap)
      if (k == i) tr.snapshots.push_back(cur);
  };
  record(0, 0.0);
  for (long i = 1; i <= n; ++i) {
    StepLog lg;
    cur = solver.step(cur, h, &lg);
    cur.t = initial.t + i * h;
    record(i, lg.clipped_mass);
  }
  return tr;
}

SpeciesPairDistribution two_blob_initial(const TwoBlobScenario& sc, const ScalingContext& ctx) {
  const auto grid = vlasov_grid(sc.L, sc.nq, sc.p_max, sc.np);
  auto blob = [&](double q0, double p0) {
    return [=](double q, double p) {
      const double dq = min_image(q - q0, sc.L);
      return std::exp(-0.5 * dq * dq / (sc.sq * sc.sq) - 0.5 * (p - p0) * (p - p0) / (sc.sp * sc.sp));
    };
  };
  return make_distribution(grid, ctx, blob(sc.q1, sc.p1), blob(sc.q2, sc.p2));
}

PotentialSet two_blob_potentials() {
  return {Potential::gaussian(1.0, 0.8), Potential::gaussian(1.0, 0.8),
          Potential::gaussian(0.5, 1.0)};
}

}  // namespace v2s
