#include "v2s/coherent_husimi.hpp"

#include <algorithm>
#include <cmath>

namespace v2s {

std::string to_string(ProfileKind k) {
  return k == ProfileKind::CosineBump ? "cosine_bump" : "truncated_gaussian";
}

ProfileKind profile_kind_from_string(const std::string& s) {
  if (s == "cosine_bump" || s == "bump") return ProfileKind::CosineBump;
  if (s == "truncated_gaussian" || s == "gaussian") return ProfileKind::TruncatedGaussian;
  throw ConfigError("unknown coherent profile '" + s + "'");
}

// ---- phase grid ----

static std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

std::size_t PhaseGrid::q_points() const { return ipow(static_cast<std::size_t>(nq), d); }
std::size_t PhaseGrid::p_points() const { return ipow(static_cast<std::size_t>(np), d); }

double PhaseGrid::q(std::size_t z, int axis) const {
  std::size_t i = iq(z);
  for (int a = 0; a < axis; ++a) i /= nq;
  return q0 + static_cast<double>(i % nq) * dq;
}

double PhaseGrid::p(std::size_t z, int axis) const {
  std::size_t i = ip(z);
  for (int a = 0; a < axis; ++a) i /= np;
  return p0 + static_cast<double>(i % np) * dp;
}

double PhaseGrid::weight() const { return std::pow(dq * dp, d); }

void PhaseGrid::validate() const {
  if (d < 1 || d > 3) throw InvalidInput("phase grid dimension must be 1, 2 or 3");
  if (nq < 1 || np < 1) throw InvalidInput("phase grid needs at least one point per axis");
  if (!(dq > 0.0) || !(dp > 0.0)) throw InvalidInput("phase grid steps must be positive");
  if (!std::isfinite(q0) || !std::isfinite(p0)) throw InvalidInput("phase grid origin not finite");
}

PhaseGrid husimi_grid(const LatticeConfig& lat, double hbar, int n_p, double p_max, int stride) {
  if (stride < 1 || lat.M % stride != 0)
    throw InvalidInput("q stride must divide the number of lattice sites per axis");
  PhaseGrid g;
  g.d = lat.d;
  g.q_stride = stride;
  g.nq = lat.M / stride;
  g.q0 = lat.position(0);
  g.dq = lat.dx * stride;
  g.np = n_p > 0 ? n_p : lat.M;
  const double zone = kPi * hbar / lat.dx;
  const double top = p_max > 0.0 ? p_max : zone;
  if (top > zone * (1.0 + 1e-12))
    throw InvalidInput("p_max exceeds the momenta resolvable on the lattice (p_max dx > pi hbar)");
  g.dp = 2.0 * top / g.np;
  g.p0 = -top;
  g.p_periodic = p_max <= 0.0;
  g.validate();
  return g;
}

PhaseGrid vlasov_grid(double L, int nq, double p_max, int np) {
  if (!(L > 0.0) || !(p_max > 0.0)) throw InvalidInput("vlasov grid extents must be positive");
  PhaseGrid g;
  g.d = 1;
  g.nq = nq;
  g.dq = L / nq;
  g.q0 = -0.5 * L + 0.5 * g.dq;
  g.np = np;
  g.dp = 2.0 * p_max / np;
  g.p0 = -p_max + 0.5 * g.dp;
  g.validate();
  return g;
}

// ---- coherent family ----

namespace {

double radial(ProfileKind kind, double R1, double s) {
  if (s >= R1) return 0.0;
  if (kind == ProfileKind::CosineBump) {
    const double c = std::cos(0.5 * kPi * s / R1);
    return c * c;
  }
  return std::exp(-0.5 * s * s);
}

double radial_d(ProfileKind kind, double R1, double s) {
  if (s >= R1) return 0.0;
  if (kind == ProfileKind::CosineBump) return -0.5 * kPi / R1 * std::sin(kPi * s / R1);
  return -s * std::exp(-0.5 * s * s);
}

}  // namespace

CoherentFamily::CoherentFamily(const LatticeConfig& lat, double hbar, ProfileKind kind, double R1)
    : lat_(lat), hbar_(hbar), kind_(kind), R1_(R1) {
  if (!(R1 > 0.0)) throw InvalidInput("profile radius must be positive");
  if (!(hbar > 0.0)) throw InvalidInput("hbar must be positive");
  if (window_diameter_sites() >= lat.M)
    throw InvalidInput("coherent window wider than the periodic lattice");

  // lattice normalisation for a window centred on a site
  const int d = lat.d;
  const double sh = std::sqrt(hbar);
  const int r = static_cast<int>(std::ceil(R1 * sh / lat.dx));
  double s2 = 0.0;
  std::vector<int> off(d, -r);
  for (;;) {
    double rr = 0.0;
    for (int a = 0; a < d; ++a) rr += std::pow(off[a] * lat.dx / sh, 2);
    const double v = radial(kind, R1, std::sqrt(rr));
    s2 += v * v;
    int a = 0;
    while (a < d && ++off[a] > r) off[a++] = -r;
    if (a == d) break;
  }
  s2 *= std::pow(lat.dx, d) * std::pow(hbar, -0.5 * d);
  if (!(s2 > 0.0)) throw InvalidInput("coherent window contains no lattice sites");
  norm_const_ = 1.0 / std::sqrt(s2);

  // continuum int |grad f|^2 / int f^2 on a fine radial grid (Simpson)
  const int n = 20000;
  const double h = R1 / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double jac = std::pow(s, d - 1);
    const double f = radial(kind, R1, s);
    const double fp = radial_d(kind, R1, s);
    num += w * fp * fp * jac;
    den += w * f * f * jac;
  }
  grad_norm2_ = num / den;
}

double CoherentFamily::profile(const double* r) const {
  double rr = 0.0;
  for (int a = 0; a < lat_.d; ++a) rr += r[a] * r[a];
  return radial(kind_, R1_, std::sqrt(rr));
}

void CoherentFamily::profile_grad(const double* r, double* out) const {
  double rr = 0.0;
  for (int a = 0; a < lat_.d; ++a) rr += r[a] * r[a];
  const double s = std::sqrt(rr);
  const double dr = s > 0.0 ? radial_d(kind_, R1_, s) / s : 0.0;
  for (int a = 0; a < lat_.d; ++a) out[a] = dr * r[a];
}

int CoherentFamily::window_diameter_sites() const {
  return 2 * static_cast<int>(std::ceil(R1_ * std::sqrt(hbar_) / lat_.dx)) + 1;
}

CoherentFamily::Window CoherentFamily::window(const double* q, const double* p,
                                              bool with_grad) const {
  const int d = lat_.d;
  const double sh = std::sqrt(hbar_);
  const double L = lat_.length();
  const double amp = norm_const_ * std::pow(hbar_, -0.25 * d) * std::sqrt(lat_.cell_volume());
  // nearest site to q per axis, then a box of radius r around it
  const int r = std::min(static_cast<int>(std::ceil(R1_ * sh / lat_.dx)) + 1, (lat_.M - 1) / 2);
  std::vector<int> centre(d), off(d, -r), c(d);
  for (int a = 0; a < d; ++a)
    centre[a] = static_cast<int>(std::lround(q[a] / lat_.dx)) + lat_.M / 2;
  Window w;
  std::vector<double> delta(d), rs(d), gr(d);
  for (;;) {
    double rr = 0.0;
    for (int a = 0; a < d; ++a) {
      c[a] = centre[a] + off[a];
      const double pos = lat_.position(((c[a] % lat_.M) + lat_.M) % lat_.M);
      delta[a] = min_image(pos - q[a], L);
      rs[a] = delta[a] / sh;
      rr += rs[a] * rs[a];
    }
    if (std::sqrt(rr) < R1_) {
      const double f = radial(kind_, R1_, std::sqrt(rr));
      double phase = 0.0;
      for (int a = 0; a < d; ++a) phase += p[a] * (q[a] + delta[a]);
      const cplx e = std::polar(1.0, phase / hbar_);
      w.sites.push_back(lat_.flat(c.data()));
      w.g.push_back(amp * f * e);
      if (with_grad) {
        profile_grad(rs.data(), gr.data());
        for (int a = 0; a < d; ++a) w.dg.push_back(-amp / sh * gr[a] * e);
      }
    }
    int a = 0;
    while (a < d && ++off[a] > r) off[a++] = -r;
    if (a == d) break;
  }
  if (with_grad && d > 1) {
    // reorder to axis-major blocks
    const std::size_t n = w.sites.size();
    CplxVec dg(d * n);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) dg[a * n + i] = w.dg[i * d + a];
    w.dg = std::move(dg);
  }
  return w;
}

CplxVec CoherentFamily::lattice_vector(const double* q, const double* p) const {
  CplxVec v(lat_.sites(), 0.0);
  const auto w = window(q, p);
  for (std::size_t i = 0; i < w.sites.size(); ++i) v[w.sites[i]] = w.g[i];
  return v;
}

CplxVec CoherentFamily::coherent_state(const double* q, const double* p) const {
  CplxVec v = lattice_vector(q, p);
  const double s = 1.0 / std::sqrt(lat_.cell_volume());
  for (auto& x : v) x *= s;
  return v;
}

// ---- Husimi transform ----

double HusimiMeasure::integral() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * std::pow(grid.weight(), order());
}

namespace {

struct SlotWindows {
  std::vector<CoherentFamily::Window> w;  // one per phase point
};

SlotWindows all_windows(const CoherentFamily& fam, const PhaseGrid& grid) {
  SlotWindows s;
  const std::size_t Z = grid.points();
  s.w.reserve(Z);
  std::vector<double> q(grid.d), p(grid.d);
  for (std::size_t z = 0; z < Z; ++z) {
    for (int a = 0; a < grid.d; ++a) {
      q[a] = grid.q(z, a);
      p[a] = grid.p(z, a);
    }
    s.w.push_back(fam.window(q.data(), p.data()));
  }
  return s;
}

void check_grid_on_lattice(const CoherentFamily& fam, const PhaseGrid& grid) {
  const auto& lat = fam.lattice();
  if (grid.d != lat.d) throw InvalidInput("phase grid and lattice dimensions differ");
  const double t = grid.q0 / lat.dx + lat.M / 2;
  const double s = grid.dq / lat.dx;
  if (std::abs(t - std::round(t)) > 1e-9 || std::abs(s - std::round(s)) > 1e-9)
    throw InvalidInput("quantum q-grid must consist of lattice positions");
}

HusimiMeasure finish(RealVec&& values, const CplxVec& raw, int k, int l, const PhaseGrid& grid,
                     const ScalingContext& ctx) {
  double peak = 0.0, resid = 0.0;
  for (const auto& v : raw) {
    peak = std::max(peak, std::abs(v.real()));
    resid = std::max(resid, std::abs(v.imag()));
  }
  if (resid > 1e-9 * std::max(1.0, peak))
    throw ImaginaryResidue("imaginary part " + std::to_string(resid) + " in Husimi values");
  HusimiMeasure m;
  m.k = k;
  m.l = l;
  m.grid = grid;
  m.ctx = ctx;
  m.values = std::move(values);
  return m;
}

}  // namespace

HusimiMeasure husimi_transform(const ReducedDensityMatrix& gamma, const CoherentFamily& fam,
                               const PhaseGrid& grid) {
  const int n = gamma.order();
  if (n < 1 || n > 3) throw OrderTooHigh("Husimi transform supports orders 1 to 3");
  check_grid_on_lattice(fam, grid);
  const std::size_t S = static_cast<std::size_t>(gamma.sites);
  const std::size_t Z = grid.points();
  const auto wins = all_windows(fam, grid);

  // T[P][u_i][ru][w_i][rw], starting with P = 1 and the lattice-normalised kernel
  std::size_t side = ipow(S, n);
  const double scale = std::pow(gamma.cell, n);
  CplxVec T(side * side);
  for (std::size_t u = 0; u < side; ++u)
    for (std::size_t w = 0; w < side; ++w) T[u * side + w] = gamma.kernel(u, w) * scale;

  std::size_t P = 1;
  for (int slot = 0; slot < n; ++slot) {
    const std::size_t R = ipow(S, n - slot - 1);
    const std::size_t in_block = S * R * S * R;  // per prefix
    const std::size_t out_block = R * R;
    if (P * Z * out_block > 400'000'000ull)
      throw CapacityExceeded("Husimi contraction intermediate too large");
    CplxVec out(P * Z * out_block, 0.0);
    for (std::size_t pre = 0; pre < P; ++pre) {
      const cplx* src = T.data() + pre * in_block;
      for (std::size_t z = 0; z < Z; ++z) {
        cplx* dst = out.data() + (pre * Z + z) * out_block;
        const auto& win = wins.w[z];
        const std::size_t nw = win.sites.size();
        for (std::size_t iu = 0; iu < nw; ++iu) {
          const cplx cu = std::conj(win.g[iu]);
          const std::size_t u = win.sites[iu];
          for (std::size_t iw = 0; iw < nw; ++iw) {
            const cplx c = cu * win.g[iw];
            const std::size_t w = win.sites[iw];
            for (std::size_t ru = 0; ru < R; ++ru) {
              const cplx* row = src + ((u * R + ru) * S + w) * R;
              cplx* drow = dst + ru * R;
              for (std::size_t rw = 0; rw < R; ++rw) drow[rw] += c * row[rw];
            }
          }
        }
      }
    }
    T.swap(out);
    P *= Z;
  }
  RealVec vals(T.size());
  for (std::size_t i = 0; i < T.size(); ++i) vals[i] = T[i].real();
  return finish(std::move(vals), T, gamma.k, gamma.l, grid, gamma.ctx);
}

HusimiMeasure husimi_from_state(const FockSpace& space, const ManyBodyState& s,
                                const CoherentFamily& fam, const PhaseGrid& grid, int k, int l) {
  const int n = k + l;
  if (n < 1 || n > 3) throw OrderTooHigh("Husimi from state supports orders 1 to 3");
  if (k > s.N1 || l > s.N2 || k < 0 || l < 0) throw InvalidInput("order exceeds particle numbers");
  check_grid_on_lattice(fam, grid);
  const std::size_t Z = grid.points();
  const auto wins = all_windows(fam, grid);
  const int S = space.sites();
  std::vector<CplxVec> dense(Z, CplxVec(S, 0.0));
  for (std::size_t z = 0; z < Z; ++z)
    for (std::size_t i = 0; i < wins.w[z].sites.size(); ++i)
      dense[z][wins.w[z].sites[i]] = wins.w[z].g[i];

  const double nn = s.amp.squaredNorm();
  RealVec vals(ipow(Z, n), 0.0);
  // depth-first over slots, storing the partially annihilated vector
  std::vector<std::size_t> idx(n, 0);
  auto rec = [&](auto&& self, int slot, const ManyBodyState& cur, std::size_t flat) -> void {
    if (slot == n) {
      vals[flat] = cur.is_zero() ? 0.0 : cur.amp.squaredNorm() / nn;
      return;
    }
    const int species = slot < k ? 1 : 2;
    for (std::size_t z = 0; z < Z; ++z) {
      const auto next = apply_annihilation_mode(space, cur, species, dense[z].data());
      self(self, slot + 1, next, flat * Z + z);
    }
  };
  rec(rec, 0, s, 0);
  CplxVec raw;
  return finish(std::move(vals), raw, k, l, grid, s.ctx);
}

// ---- marginal property checks ----

namespace {

double falling(int n, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= (n - i);
  return r;
}

// value index with slots a and b exchanged
std::size_t swap_slots(std::size_t idx, int n, std::size_t Z, int a, int b) {
  std::vector<std::size_t> dig(n);
  for (int s = n - 1; s >= 0; --s) {
    dig[s] = idx % Z;
    idx /= Z;
  }
  std::swap(dig[a], dig[b]);
  std::size_t r = 0;
  for (int s = 0; s < n; ++s) r = r * Z + dig[s];
  return r;
}

double recursion_dev(const HusimiMeasure& marg, const HusimiMeasure& lower, double factor) {
  if (marg.values.size() != lower.values.size())
    throw InvalidInput("recursion check needs measures on the same grid");
  double peak = 0.0, dev = 0.0;
  for (std::size_t i = 0; i < lower.values.size(); ++i) {
    const double t = factor * lower.values[i];
    peak = std::max(peak, std::abs(t));
    dev = std::max(dev, std::abs(marg.values[i] - t));
  }
  return peak > 0.0 ? dev / peak : dev;
}

}  // namespace

HusimiMeasure marginalize_slot(const HusimiMeasure& m, int slot) {
  const int n = m.order();
  if (slot < 0 || slot >= n) throw InvalidInput("slot outside the measure order");
  const std::size_t Z = m.grid.points();
  const std::size_t inner = ipow(Z, n - slot - 1);
  const std::size_t outer = ipow(Z, slot);
  HusimiMeasure r;
  r.k = slot < m.k ? m.k - 1 : m.k;
  r.l = slot < m.k ? m.l : m.l - 1;
  r.grid = m.grid;
  r.ctx = m.ctx;
  r.values.assign(outer * inner, 0.0);
  const double w = m.grid.weight() / std::pow(2.0 * kPi, m.grid.d);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t z = 0; z < Z; ++z)
      for (std::size_t i = 0; i < inner; ++i)
        r.values[o * inner + i] += w * m.values[(o * Z + z) * inner + i];
  return r;
}

PropertyReport check_marginal_properties(const HusimiMeasure& m, const ScalingContext& ctx,
                             const HusimiMeasure* lower1, const HusimiMeasure* lower2) {
  PropertyReport rep;
  const int n = m.order();
  const std::size_t Z = m.grid.points();
  rep.min_value = m.values.empty() ? 0.0 : *std::min_element(m.values.begin(), m.values.end());
  rep.max_value = m.values.empty() ? 0.0 : *std::max_element(m.values.begin(), m.values.end());
  rep.passive = rep.min_value >= -1e-9 && rep.max_value <= 1.0 + kDiscretizationSlack;

  for (std::size_t i = 0; i < m.values.size(); ++i) {
    for (int a = 0; a + 1 < m.k; ++a)
      rep.symmetry_dev = std::max(
          rep.symmetry_dev, std::abs(m.values[i] - m.values[swap_slots(i, n, Z, a, a + 1)]));
    for (int a = m.k; a + 1 < n; ++a)
      rep.symmetry_dev = std::max(
          rep.symmetry_dev, std::abs(m.values[i] - m.values[swap_slots(i, n, Z, a, a + 1)]));
  }

  const double N = ctx.N();
  rep.l1_value = m.integral() / std::pow(2.0 * kPi, m.grid.d * n);
  rep.l1_expected = falling(ctx.N1, m.k) / std::pow(N, m.k) * falling(ctx.N2, m.l) / std::pow(N, m.l);
  rep.l1_rel_err = rep.l1_expected != 0.0
                       ? std::abs(rep.l1_value - rep.l1_expected) / rep.l1_expected
                       : std::abs(rep.l1_value);

  if (lower1 && m.k >= 1) {
    rep.has_recursion1 = true;
    rep.recursion1_dev =
        recursion_dev(marginalize_slot(m, m.k - 1), *lower1, (ctx.N1 - m.k + 1) / N);
  }
  if (lower2 && m.l >= 1) {
    rep.has_recursion2 = true;
    rep.recursion2_dev = recursion_dev(marginalize_slot(m, n - 1), *lower2, (ctx.N2 - m.l + 1) / N);
  }
  return rep;
}

IdentityReport kinetic_identity(const FockSpace& space, const ManyBodyState& s,
                                const HusimiMeasure& m, const CoherentFamily& fam, int species) {
  if (m.order() != 1 || (species == 1 ? m.k != 1 : m.l != 1))
    throw InvalidInput("kinetic identity needs the one-particle measure of the species");
  IdentityReport r;
  const double N = s.ctx.N();
  r.lhs = expect_kinetic_spectral(space, s, species) / N;
  r.lhs_stencil = expect_kinetic(space, s, species) / N;
  const int d = m.grid.d;
  double acc = 0.0;
  for (std::size_t z = 0; z < m.values.size(); ++z) {
    double p2 = 0.0;
    for (int a = 0; a < d; ++a) p2 += m.grid.p(z, a) * m.grid.p(z, a);
    acc += p2 * m.values[z];
  }
  r.p2_moment = acc * m.grid.weight() / std::pow(2.0 * kPi, d);
  const double frac = species == 1 ? s.ctx.n1() : s.ctx.n2();
  r.window_term = frac * fam.hbar() * fam.grad_norm2();
  r.rhs = 0.5 * (r.p2_moment - r.window_term);
  r.abs_gap = std::abs(r.lhs - r.rhs);
  const double scale = std::max(std::abs(r.lhs), std::abs(r.rhs));
  r.rel_gap = scale > 0.0 ? r.abs_gap / scale : 0.0;
  const double sc2 = std::max(std::abs(r.lhs_stencil), std::abs(r.rhs));
  r.rel_gap_stencil = sc2 > 0.0 ? std::abs(r.lhs_stencil - r.rhs) / sc2 : 0.0;
  return r;
}

double phase_moment_q_p2(const HusimiMeasure& m) {
  const int n = m.order();
  const int d = m.grid.d;
  const std::size_t Z = m.grid.points();
  RealVec per(Z);
  for (std::size_t z = 0; z < Z; ++z) {
    double q2 = 0.0, p2 = 0.0;
    for (int a = 0; a < d; ++a) {
      q2 += m.grid.q(z, a) * m.grid.q(z, a);
      p2 += m.grid.p(z, a) * m.grid.p(z, a);
    }
    per[z] = std::sqrt(q2) + p2;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    std::size_t idx = i;
    double f = 0.0;
    for (int s = 0; s < n; ++s) {
      f += per[idx % Z];
      idx /= Z;
    }
    acc += f * m.values[i];
  }
  return acc * std::pow(m.grid.weight() / std::pow(2.0 * kPi, d), n);
}

MomentReport moment_bounds(const std::vector<HusimiMeasure>& traj, const std::vector<double>& times) {
  if (traj.size() != times.size()) throw InvalidInput("trajectory and times differ in length");
  MomentReport r;
  r.times = times;
  double tmax = 0.0;
  for (double t : times) tmax = std::max(tmax, std::abs(t));
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double y = phase_moment_q_p2(traj[i]);
    r.moments.push_back(y);
    const double e = 1.0 + std::pow(std::abs(times[i]), 3);
    // envelope calibrated on the first half of the window
    if (i == 0 || std::abs(times[i]) <= 0.5 * tmax) r.envelope_C = std::max(r.envelope_C, y / e);
  }
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (r.moments[i] > 2.0 * r.envelope_C * (1.0 + std::pow(std::abs(times[i]), 3)))
      r.exceeds = true;
  return r;
}

}  // namespace v2s
