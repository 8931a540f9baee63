#include "v2s/hierarchy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace v2s {

namespace {

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

double periodic_grad(const Potential& v, double x, double L) {
  if (v.is_zero() || at_half_box(x, L)) return 0.0;
  return v.grad(min_image(x, L));
}

const Potential& pair_potential(const PotentialSet& pots, int a, int b) {
  if (a == 1 && b == 1) return pots.v11;
  if (a == 2 && b == 2) return pots.v22;
  return pots.v12;
}

HusimiMeasure zero_measure(int k, int l, const PhaseGrid& grid, const ScalingContext& ctx) {
  HusimiMeasure m;
  m.k = k;
  m.l = l;
  m.grid = grid;
  m.ctx = ctx;
  m.values.assign(ipow(grid.points(), k + l), 0.0);
  return m;
}

std::string slot_tag(int species, int c) {
  return std::to_string(species) + std::to_string(c);
}

}  // namespace

// ---- family ----

const HusimiMeasure& HusimiFamily::at(int k, int l) const {
  auto it = levels.find({k, l});
  if (it == levels.end())
    throw MissingLevel("family has no level (" + std::to_string(k) + "," + std::to_string(l) + ")");
  return it->second;
}

void HusimiFamily::insert(HusimiMeasure m) {
  if (m.order() > max_order) throw OrderTooHigh("level above the family order");
  levels[{m.k, m.l}] = std::move(m);
}

double HusimiFamily::recursion_deviation() const {
  double dev = 0.0;
  for (const auto& [key, m] : levels) {
    const HusimiMeasure* l1 = m.k >= 1 && has(m.k - 1, m.l) && m.order() > 1 ? &at(m.k - 1, m.l) : nullptr;
    const HusimiMeasure* l2 = m.l >= 1 && has(m.k, m.l - 1) && m.order() > 1 ? &at(m.k, m.l - 1) : nullptr;
    if (!l1 && !l2) continue;
    const auto rep = check_marginal_properties(m, ctx, l1, l2);
    if (rep.has_recursion1) dev = std::max(dev, rep.recursion1_dev);
    if (rep.has_recursion2) dev = std::max(dev, rep.recursion2_dev);
  }
  return dev;
}

HusimiFamily husimi_family(const FockSpace& space, const ManyBodyState& s, const CoherentFamily& fam,
                           const PhaseGrid& grid, int max_order) {
  if (max_order < 1 || max_order > kFamilyHardCap)
    throw OrderTooHigh("family order must be between 1 and " + std::to_string(kFamilyHardCap));
  HusimiFamily f;
  f.grid = grid;
  f.ctx = s.ctx;
  f.max_order = max_order;
  for (int n = 1; n <= max_order; ++n)
    for (int k = 0; k <= n; ++k) {
      const int l = n - k;
      if (k > s.N1 || l > s.N2)
        f.insert(zero_measure(k, l, grid, s.ctx));
      else
        f.insert(husimi_from_state(space, s, fam, grid, k, l));
    }
  return f;
}

// ---- grid derivatives ----

namespace {

// Periodic spectral differentiation matrix for n points over one period T.
std::vector<double> spectral_matrix(int n, double T) {
  std::vector<double> D(static_cast<std::size_t>(n) * n, 0.0);
  const double h = 2.0 * kPi / n;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      if (j == k) continue;
      const double x = 0.5 * (j - k) * h;
      const double sgn = ((j - k) % 2 == 0) ? 1.0 : -1.0;
      const double v = (n % 2 == 0) ? 0.5 * sgn / std::tan(x) : 0.5 * sgn / std::sin(x);
      D[static_cast<std::size_t>(j) * n + k] = v * 2.0 * kPi / T;
    }
  return D;
}

void fd6_line(const double* in, double* out, int n, std::ptrdiff_t stride, double h) {
  static const double c[3] = {3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int o = 1; o <= 3; ++o) {
      const double r = i + o < n ? in[(i + o) * stride] : 0.0;
      const double l = i - o >= 0 ? in[(i - o) * stride] : 0.0;
      acc += c[o - 1] * (r - l);
    }
    out[i * stride] = acc / h;
  }
}

}  // namespace

RealVec slot_derivative(const RealVec& values, const PhaseGrid& grid, int slots, int slot,
                        bool along_p) {
  if (grid.d != 1) throw InvalidInput("grid derivatives are implemented for d = 1");
  const std::size_t Z = grid.points();
  if (values.size() != ipow(Z, slots) || slot < 0 || slot >= slots)
    throw InvalidInput("grid function does not match the slot layout");
  const std::size_t inner = ipow(Z, slots - 1 - slot);  // stride of this slot's z
  const std::size_t outer = ipow(Z, slot);
  const int n = along_p ? grid.np : grid.nq;
  const std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(inner * (along_p ? 1 : grid.np));
  const bool spectral = !along_p || grid.p_periodic;
  std::vector<double> D;
  if (spectral) D = spectral_matrix(n, along_p ? grid.np * grid.dp : grid.q_length());
  RealVec out(values.size(), 0.0);
  std::vector<double> line(n), res(n);
  const int other = along_p ? grid.nq : grid.np;
  for (std::size_t o = 0; o < outer; ++o)
    for (int t = 0; t < other; ++t)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base =
            o * Z * inner + (along_p ? static_cast<std::size_t>(t) * grid.np * inner : t * inner) + in;
        for (int i = 0; i < n; ++i) line[i] = values[base + i * stride];
        if (spectral) {
          for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            const double* row = &D[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) acc += row[j] * line[j];
            res[i] = acc;
          }
        } else {
          fd6_line(line.data(), res.data(), n, 1, grid.dp);
        }
        for (int i = 0; i < n; ++i) out[base + i * stride] = res[i];
      }
  return out;
}

// ---- limit hierarchy ----

RealVec collision_flux(const HusimiFamily& fam, int k, int l, int slot, int extra,
                       const PotentialSet& pots) {
  const auto& hi = extra == 1 ? fam.at(k + 1, l) : fam.at(k, l + 1);
  const auto& grid = fam.grid;
  if (grid.d != 1) throw InvalidInput("collision integrals are implemented for d = 1");
  const int n = k + l;
  const std::size_t Z = grid.points();
  const int species = slot < k ? 1 : 2;
  const Potential& v = pair_potential(pots, species, extra);
  RealVec out(ipow(Z, n), 0.0);
  if (v.is_zero()) return out;
  const int ins = extra == 1 ? k : n;  // position of the new slot in the higher measure
  const double L = grid.q_length();
  const double w = grid.weight() / (2.0 * kPi);
  // kernel by q-index difference
  std::vector<double> kern(grid.nq);
  for (int j = 0; j < grid.nq; ++j) kern[j] = periodic_grad(v, j * grid.dq, L);
  const std::size_t tail = ipow(Z, n - ins);
  std::vector<std::size_t> digit(n);
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    std::size_t r = idx;
    for (int s = n - 1; s >= 0; --s) {
      digit[s] = r % Z;
      r /= Z;
    }
    const int iq_s = static_cast<int>(grid.iq(digit[slot]));
    const std::size_t head = idx / tail, low = idx % tail;
    double acc = 0.0;
    for (std::size_t zp = 0; zp < Z; ++zp) {
      const int iq2 = static_cast<int>(grid.iq(zp));
      const double kv = kern[((iq_s - iq2) % grid.nq + grid.nq) % grid.nq];
      if (kv == 0.0) continue;
      acc += kv * hi.values[(head * Z + zp) * tail + low];
    }
    out[idx] = acc * w;
  }
  return out;
}

RealVec HierarchyRhs::total() const {
  RealVec r(transport);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += collision[i];
  return r;
}

HierarchyRhs vlasov_hierarchy_rhs(const HusimiFamily& fam, int k, int l, const PotentialSet& pots) {
  const auto& m = fam.at(k, l);
  fam.at(k + 1, l);
  fam.at(k, l + 1);
  const int n = k + l;
  const auto& grid = fam.grid;
  HierarchyRhs r;
  r.transport.assign(m.values.size(), 0.0);
  r.collision.assign(m.values.size(), 0.0);
  const std::size_t Z = grid.points();
  for (int s = 0; s < n; ++s) {
    const RealVec dq = slot_derivative(m.values, grid, n, s, false);
    const std::size_t stride = ipow(Z, n - 1 - s);
    for (std::size_t i = 0; i < dq.size(); ++i) r.transport[i] -= grid.p((i / stride) % Z) * dq[i];
    for (int extra : {1, 2}) {
      const RealVec F = collision_flux(fam, k, l, s, extra, pots);
      const RealVec dF = slot_derivative(F, grid, n, s, true);
      for (std::size_t i = 0; i < dF.size(); ++i) r.collision[i] += dF[i];
    }
  }
  return r;
}

// ---- factorized solutions ----

FactorizedResidual factorized_residual(const SpeciesPairDistribution& minus,
                                       const SpeciesPairDistribution& mid,
                                       const SpeciesPairDistribution& plus, double h,
                                       const PotentialSet& pots, int k, int l) {
  const int n = k + l;
  if (n < 1 || k < 0 || l < 0) throw InvalidInput("order must be positive");
  if (n > 2) throw OrderTooHigh("factorized residual supports k + l <= 2");
  if (!(h > 0.0)) throw InvalidInput("dt_probe must be positive");
  const auto& g = mid.grid;
  const std::size_t Z = g.points();
  struct Factor {
    RealVec m, dt, rhs, res;
  };
  Factor f[2];
  const RealVec rho1 = density(mid.m1, g), rho2 = density(mid.m2, g);
  for (int a = 0; a < 2; ++a) {
    const int alpha = a + 1;
    auto& F = f[a];
    F.m = mid.species(alpha);
    F.dt.resize(Z);
    for (std::size_t z = 0; z < Z; ++z)
      F.dt[z] = (plus.species(alpha)[z] - minus.species(alpha)[z]) / (2.0 * h);
    const RealVec dq = slot_derivative(F.m, g, 1, 0, false);
    const RealVec dp = slot_derivative(F.m, g, 1, 0, true);
    // collision integrals over the new species-1 and species-2 slots
    RealVec phi(g.nq, 0.0);
    const auto c1 = convolve_grad(pair_potential(pots, alpha, 1), rho1, g, ConvolutionMethod::Direct);
    const auto c2 = convolve_grad(pair_potential(pots, alpha, 2), rho2, g, ConvolutionMethod::Direct);
    for (int i = 0; i < g.nq; ++i) phi[i] = c1[i] + c2[i];
    F.rhs.resize(Z);
    F.res.resize(Z);
    for (std::size_t z = 0; z < Z; ++z) {
      F.rhs[z] = -g.p(z) * dq[z] + phi[g.iq(z)] * dp[z];
      F.res[z] = F.dt[z] - F.rhs[z];
    }
  }
  const double w = g.weight() / (2.0 * kPi);
  FactorizedResidual r;
  if (n == 1) {
    const auto& F = f[k == 1 ? 0 : 1];
    for (std::size_t z = 0; z < Z; ++z) {
      r.residual_l1 += std::abs(F.res[z]);
      r.rhs_l1 += std::abs(F.rhs[z]);
      r.dt_l1 += std::abs(F.dt[z]);
    }
    r.residual_l1 *= w;
    r.rhs_l1 *= w;
    r.dt_l1 *= w;
  } else {
    const auto& A = f[k >= 1 ? 0 : 1];
    const auto& B = f[k == 2 ? 0 : 1];
    for (std::size_t z1 = 0; z1 < Z; ++z1) {
      const double ma = A.m[z1], ra = A.res[z1], ha = A.rhs[z1], da = A.dt[z1];
      double s_res = 0.0, s_rhs = 0.0, s_dt = 0.0;
      for (std::size_t z2 = 0; z2 < Z; ++z2) {
        s_res += std::abs(ra * B.m[z2] + ma * B.res[z2]);
        s_rhs += std::abs(ha * B.m[z2] + ma * B.rhs[z2]);
        s_dt += std::abs(da * B.m[z2] + ma * B.dt[z2]);
      }
      r.residual_l1 += s_res;
      r.rhs_l1 += s_rhs;
      r.dt_l1 += s_dt;
    }
    r.residual_l1 *= w * w;
    r.rhs_l1 *= w * w;
    r.dt_l1 *= w * w;
  }
  r.residual = r.rhs_l1 > 0.0 ? r.residual_l1 / r.rhs_l1 : r.residual_l1;
  return r;
}

FactorizedResidual factorized_residual(const SpeciesPairDistribution& mid, const PotentialSet& pots,
                                       int k, int l, double dt_probe) {
  VlasovSolver solver(pots);
  const auto plus = solver.step(mid, dt_probe);
  const auto minus = solver.step(mid, -dt_probe);
  return factorized_residual(minus, mid, plus, dt_probe, pots, k, l);
}

// ---- weak pairing ----

double TestBattery::value(int b, double q, double p, double L, double P) {
  const int qm = b / 2, pm = b % 2;
  const double kq = 2.0 * kPi * (qm / 2 + 1) / L, kp = 2.0 * kPi / P;
  const double fq = (qm % 2 == 0) ? std::cos(kq * q) : std::sin(kq * q);
  const double fp = pm == 0 ? std::cos(kp * p) : std::sin(kp * p);
  return fq * fp;
}

double TestBattery::dq(int b, double q, double p, double L, double P) {
  const int qm = b / 2, pm = b % 2;
  const double kq = 2.0 * kPi * (qm / 2 + 1) / L, kp = 2.0 * kPi / P;
  const double fq = (qm % 2 == 0) ? -kq * std::sin(kq * q) : kq * std::cos(kq * q);
  const double fp = pm == 0 ? std::cos(kp * p) : std::sin(kp * p);
  return fq * fp;
}

double TestBattery::dp(int b, double q, double p, double L, double P) {
  const int qm = b / 2, pm = b % 2;
  const double kq = 2.0 * kPi * (qm / 2 + 1) / L, kp = 2.0 * kPi / P;
  const double fq = (qm % 2 == 0) ? std::cos(kq * q) : std::sin(kq * q);
  const double fp = pm == 0 ? -kp * std::sin(kp * p) : kp * std::cos(kp * p);
  return fq * fp;
}

double weak_pairing(const Term& t, const PhaseGrid& grid, int slots, int b) {
  const std::size_t Z = grid.points();
  if (t.values.size() != ipow(Z, slots)) throw InvalidInput("term does not match the slot layout");
  const double L = grid.q_length(), P = grid.np * grid.dp;
  // per-slot tables of the factor and its derivatives
  std::vector<RealVec> val(slots, RealVec(Z)), der(slots, RealVec(Z));
  for (int s = 0; s < slots; ++s) {
    const int bb = (b + s) % TestBattery::kSize;
    for (std::size_t z = 0; z < Z; ++z) {
      const double q = grid.q(z), p = grid.p(z);
      val[s][z] = TestBattery::value(bb, q, p, L, P);
      if (s == t.slot && t.div == Divergence::Q) der[s][z] = -TestBattery::dq(bb, q, p, L, P);
      if (s == t.slot && t.div == Divergence::P) der[s][z] = -TestBattery::dp(bb, q, p, L, P);
    }
  }
  double acc = 0.0;
  std::vector<std::size_t> digit(slots);
  for (std::size_t idx = 0; idx < t.values.size(); ++idx) {
    if (t.values[idx] == 0.0) continue;
    std::size_t r = idx;
    double phi = 1.0;
    for (int s = slots - 1; s >= 0; --s) {
      const std::size_t z = r % Z;
      r /= Z;
      phi *= (t.div != Divergence::None && s == t.slot) ? der[s][z] : val[s][z];
    }
    acc += phi * t.values[idx];
  }
  return acc * std::pow(grid.weight() / (2.0 * kPi), slots);
}

const RemainderNorm& RemainderReport::norm(const std::string& name) const {
  for (const auto& n : norms)
    if (n.name == name) return n;
  throw InvalidInput("no remainder named " + name);
}

// ---- quantum remainders ----

namespace {

struct Slot {
  int species;
  std::size_t z;
};

struct WindowTables {
  std::vector<CoherentFamily::Window> w;  // per phase point
  std::vector<CplxVec> dense, ddense;     // lattice vectors of g and d/dq g
};

WindowTables window_tables(const CoherentFamily& fam, const PhaseGrid& grid) {
  WindowTables t;
  const std::size_t Z = grid.points();
  const int S = fam.lattice().sites();
  t.w.resize(Z);
  t.dense.assign(Z, CplxVec(S, 0.0));
  t.ddense.assign(Z, CplxVec(S, 0.0));
  for (std::size_t z = 0; z < Z; ++z) {
    const double q = grid.q(z), p = grid.p(z);
    t.w[z] = fam.window(&q, &p, true);
    for (std::size_t i = 0; i < t.w[z].sites.size(); ++i) {
      t.dense[z][t.w[z].sites[i]] = t.w[z].g[i];
      t.ddense[z][t.w[z].sites[i]] = t.w[z].dg[i];
    }
  }
  return t;
}

void require_resolution_grid(const CoherentFamily& fam, const PhaseGrid& grid) {
  const auto& lat = fam.lattice();
  if (lat.d != 1 || grid.d != 1) throw InvalidInput("remainder terms are implemented for d = 1");
  if (grid.q_stride != 1 || grid.nq != lat.M || !grid.p_periodic || grid.np < fam.window_diameter_sites())
    throw InvalidInput("remainder terms need every lattice site in q and a full-zone p grid");
  if (std::abs(grid.q0 - lat.position(0)) > 1e-12 * lat.length())
    throw InvalidInput("q grid must sit on lattice positions");
}

cplx inner(const ManyBodyState& a, const ManyBodyState& b) {
  if (a.is_zero() || b.is_zero()) return 0.0;
  return a.amp.dot(b.amp);  // conjugates a
}

// G[y][i][j] = <A_i, n^c_y A_j> for vectors of one sector
void occupation_gram(const std::vector<ManyBodyState>& A, int c, int sites,
                     std::vector<cplx>& G) {
  const std::size_t S = A.size();
  G.assign(static_cast<std::size_t>(sites) * S * S, 0.0);
  if (S == 0 || !A[0].basis) return;
  const auto& basis = *A[0].basis;
  const std::size_t dim = basis.dim();
  std::vector<cplx> col(S);
  for (std::size_t i = 0; i < dim; ++i) {
    bool any = false;
    for (std::size_t a = 0; a < S; ++a) {
      col[a] = A[a].amp[static_cast<Eigen::Index>(i)];
      any = any || col[a] != 0.0;
    }
    if (!any) continue;
    const std::uint64_t m = c == 1 ? basis.mask1(i) : basis.mask2(i);
    for (std::uint64_t t = m; t; t &= t - 1) {
      const int y = std::countr_zero(t);
      cplx* g = &G[static_cast<std::size_t>(y) * S * S];
      for (std::size_t a = 0; a < S; ++a) {
        const cplx ca = std::conj(col[a]);
        for (std::size_t b = 0; b < S; ++b) g[a * S + b] += ca * col[b];
      }
    }
  }
}

// <A, n^c_y A> for every y
std::vector<double> occupation_profile(const ManyBodyState& A, int c, int sites) {
  std::vector<double> r(sites, 0.0);
  if (A.is_zero()) return r;
  const auto& basis = *A.basis;
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const double v = std::norm(A.amp[static_cast<Eigen::Index>(i)]);
    if (v == 0.0) continue;
    const std::uint64_t m = c == 1 ? basis.mask1(i) : basis.mask2(i);
    for (std::uint64_t t = m; t; t &= t - 1) r[std::countr_zero(t)] += v;
  }
  return r;
}

}  // namespace

RemainderReport quantum_remainders(const FockSpace& space, const ManyBodyState& s,
                                   const CoherentFamily& fam, const PhaseGrid& grid, int k, int l,
                                   const PotentialSet& pots) {
  const int n = k + l;
  if (n > 2) throw OrderTooHigh("remainder terms are evaluated for k + l <= 2");
  if (n < 1 || k < 0 || l < 0) throw InvalidInput("order must be positive");
  if (k > s.N1 || l > s.N2) throw InvalidInput("order exceeds particle numbers");
  require_resolution_grid(fam, grid);
  const auto& lat = fam.lattice();
  const int M = lat.sites();
  const double L = lat.length();
  const double hbar = s.ctx.hbar();
  const double N = s.ctx.N();
  const std::size_t Z = grid.points();
  const std::size_t total = ipow(Z, n);
  const double nn = s.amp.squaredNorm();
  const auto tab = window_tables(fam, grid);

  std::vector<int> species(n);
  for (int j = 0; j < n; ++j) species[j] = j < k ? 1 : 2;

  RemainderReport rep;
  rep.k = k;
  rep.l = l;
  rep.N = s.ctx.N();
  rep.hbar = hbar;
  rep.m = zero_measure(k, l, grid, s.ctx);

  // term storage: per slot R, E and F for both extra species; scalar hats
  std::vector<RealVec> R(n, RealVec(total, 0.0));
  std::vector<std::vector<RealVec>> E(n, std::vector<RealVec>(2, RealVec(total, 0.0)));
  std::vector<std::vector<RealVec>> F(n, std::vector<RealVec>(2, RealVec(total, 0.0)));
  RealVec H11(total, 0.0), H22(total, 0.0), H12(total, 0.0);

  // smeared force kernel W(q index, y) = sum_q' grad V(q - q') |g_q'(y)|^2 per potential
  auto smeared = [&](const Potential& v) {
    std::vector<double> W(static_cast<std::size_t>(M) * M, 0.0);
    if (v.is_zero()) return W;
    for (int iq = 0; iq < M; ++iq)
      for (int iq2 = 0; iq2 < M; ++iq2) {
        const double gv = periodic_grad(v, (iq - iq2) * lat.dx, L);
        if (gv == 0.0) continue;
        const auto& win = tab.w[static_cast<std::size_t>(iq2) * grid.np];
        for (std::size_t i = 0; i < win.sites.size(); ++i)
          W[static_cast<std::size_t>(iq) * M + win.sites[i]] += gv * std::norm(win.g[i]);
      }
    return W;
  };
  const std::vector<double> W11 = smeared(pots.v11), W12 = smeared(pots.v12), W22 = smeared(pots.v22);
  auto Wfor = [&](int a, int b) -> const std::vector<double>& {
    if (a == 1 && b == 1) return W11;
    if (a == 2 && b == 2) return W22;
    return W12;
  };
  // lattice pair potential table
  auto table = [&](const Potential& v) {
    std::vector<double> T(static_cast<std::size_t>(M) * M, 0.0);
    if (v.is_zero()) return T;
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) T[static_cast<std::size_t>(a) * M + b] = lattice_pair_potential(lat, v, a, b);
    return T;
  };
  const std::vector<double> T11 = table(pots.v11), T12 = table(pots.v12), T22 = table(pots.v22);
  auto Tfor = [&](int a, int b) -> const std::vector<double>& {
    if (a == 1 && b == 1) return T11;
    if (a == 2 && b == 2) return T22;
    return T12;
  };

  std::vector<Slot> slots(n);
  std::vector<ManyBodyState> prefix(n + 1);
  std::vector<cplx> gram;

  auto apply_mode = [&](const ManyBodyState& x, int sp, const CplxVec& g) {
    return apply_annihilation_mode(space, x, sp, g.data());
  };
  // continue the chain from slot `from` with the base windows
  auto finish_chain = [&](ManyBodyState x, int from) {
    for (int j = from; j < n; ++j) x = apply_mode(x, slots[j].species, tab.dense[slots[j].z]);
    return x;
  };

  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t r = idx;
    for (int j = n - 1; j >= 0; --j) {
      slots[j] = {species[j], r % Z};
      r /= Z;
    }
    prefix[0] = s;
    for (int j = 0; j < n; ++j) prefix[j + 1] = apply_mode(prefix[j], slots[j].species, tab.dense[slots[j].z]);
    const ManyBodyState& X = prefix[n];
    rep.m.values[idx] = X.is_zero() ? 0.0 : X.amp.squaredNorm() / nn;

    for (int j = 0; j < n; ++j) {
      const int sp = slots[j].species;
      const auto& win = tab.w[slots[j].z];
      const double q = grid.q(slots[j].z);
      const int iq = static_cast<int>(grid.iq(slots[j].z));
      // transport remainder
      const ManyBodyState Xd = finish_chain(apply_mode(prefix[j], sp, tab.ddense[slots[j].z]), j + 1);
      R[j][idx] = hbar * inner(Xd, X).imag() / nn;
      // potential remainders: expand slot j into sites
      const std::size_t S = win.sites.size();
      std::vector<ManyBodyState> Y(S);
      for (std::size_t a = 0; a < S; ++a)
        Y[a] = finish_chain(apply_annihilation(space, prefix[j], sp, win.sites[a]), j + 1);
      std::vector<double> delta(S);
      for (std::size_t a = 0; a < S; ++a) delta[a] = min_image(lat.position(win.sites[a]) - q, L);
      for (int c : {1, 2}) {
        const Potential& v = pair_potential(pots, sp, c);
        if (v.is_zero()) continue;
        const auto& Tv = Tfor(sp, c);
        // main term by the resolution of identity
        const auto prof = occupation_profile(X, c, M);
        const auto& Wv = Wfor(sp, c);
        double f = 0.0;
        for (int y = 0; y < M; ++y) f += Wv[static_cast<std::size_t>(iq) * M + y] * prof[y];
        F[j][c - 1][idx] = hbar * f / nn;
        // exact term with the mean-value kernel
        occupation_gram(Y, c, M, gram);
        cplx e = 0.0;
        for (int y = 0; y < M; ++y) {
          const cplx* G = &gram[static_cast<std::size_t>(y) * S * S];
          for (std::size_t a = 0; a < S; ++a)      // w
            for (std::size_t b = 0; b < S; ++b) {  // u
              const cplx gg = G[a * S + b];
              if (gg == 0.0) continue;
              const int ws = win.sites[a], us = win.sites[b];
              double K;
              if (a == b) {
                K = periodic_grad(v, lat.position(ws) - lat.position(y), L);
              } else {
                K = (Tv[static_cast<std::size_t>(us) * M + y] - Tv[static_cast<std::size_t>(ws) * M + y]) /
                    (delta[b] - delta[a]);
              }
              e += K * win.g[a] * std::conj(win.g[b]) * gg;
            }
        }
        E[j][c - 1][idx] = hbar * e.real() / nn;
      }
    }
    // commutator remainders over slot pairs inside the window product
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const int si = slots[i].species, sj = slots[j].species;
        const Potential& v = pair_potential(pots, si, sj);
        if (v.is_zero()) continue;
        const auto& Tv = Tfor(si, sj);
        const auto& wi = tab.w[slots[i].z];
        const auto& gj = tab.dense[slots[j].z];
        ManyBodyState XV;
        bool first = true;
        for (std::size_t a = 0; a < wi.sites.size(); ++a) {
          const int u = wi.sites[a];
          CplxVec h(gj);
          for (int x = 0; x < M; ++x) h[x] *= Tv[static_cast<std::size_t>(x) * M + u];
          ManyBodyState t = apply_annihilation(space, prefix[i], si, u);
          for (int jj = i + 1; jj < j; ++jj) t = apply_mode(t, slots[jj].species, tab.dense[slots[jj].z]);
          t = apply_mode(t, sj, h);
          t = finish_chain(t, j + 1);
          if (first) {
            XV = t;
            if (XV.basis) XV.amp *= std::conj(wi.g[a]);
            first = false;
          } else {
            XV = add_states(XV, t, std::conj(wi.g[a]));
          }
        }
        const double im = inner(X, XV).imag() / nn;
        if (si == 1 && sj == 1) H11[idx] += 2.0 / (hbar * N) * im;
        else if (si == 2 && sj == 2) H22[idx] += 2.0 / (hbar * N) * im;
        else H12[idx] += 2.0 / (hbar * N) * im;
      }
  }

  auto add = [&](std::vector<Term>& v, const std::string& name, int slot, Divergence d, RealVec vals) {
    v.push_back(Term{name, slot, d, std::move(vals)});
  };
  for (int j = 0; j < n; ++j) {
    const int sp = species[j];
    add(rep.remainders, sp == 1 ? "R1" : "R2", j, Divergence::Q, R[j]);
    for (int c : {1, 2}) {
      RealVec rt(total);
      for (std::size_t i = 0; i < total; ++i) rt[i] = E[j][c - 1][i] - F[j][c - 1][i];
      std::string name;
      if (sp == 1) name = c == 1 ? "Rt11" : "Rt12_1";
      else name = c == 1 ? "Rt12_2" : "Rt22";
      add(rep.remainders, name, j, Divergence::P, std::move(rt));
      add(rep.collisions, "C" + slot_tag(sp, c), j, Divergence::P, F[j][c - 1]);
    }
  }
  add(rep.remainders, "Rh11", -1, Divergence::None, H11);
  add(rep.remainders, "Rh12", -1, Divergence::None, H12);
  add(rep.remainders, "Rh22", -1, Divergence::None, H22);

  // norms, slots of one name combined
  const double w = std::pow(grid.weight() / (2.0 * kPi), n);
  for (const char* name : {"R1", "R2", "Rt11", "Rt12_1", "Rt12_2", "Rt22", "Rh11", "Rh12", "Rh22"}) {
    RemainderNorm rn;
    rn.name = name;
    std::vector<double> per_b(TestBattery::kSize, 0.0);
    bool any = false;
    for (const auto& t : rep.remainders) {
      if (t.name != name) continue;
      any = true;
      double l1 = 0.0;
      for (double v : t.values) l1 += std::abs(v);
      rn.l1 += l1 * w;
      for (int b = 0; b < TestBattery::kSize; ++b) per_b[b] += weak_pairing(t, grid, n, b);
    }
    if (!any) continue;
    for (double v : per_b) rn.weak = std::max(rn.weak, std::abs(v));
    rep.norms.push_back(rn);
  }
  return rep;
}

// ---- end-to-end consistency ----

ConsistencyReport bbgky_consistency(const FockSpace& space, const ManyBodyState& minus,
                                    const ManyBodyState& mid, const ManyBodyState& plus, double h,
                                    const CoherentFamily& fam, const PhaseGrid& grid, int k, int l,
                                    const PotentialSet& pots) {
  const int n = k + l;
  if (n > 2) throw OrderTooHigh("consistency check is evaluated for k + l <= 2");
  if (!(h > 0.0)) throw InvalidInput("dt_probe must be positive");
  const auto rep = quantum_remainders(space, mid, fam, grid, k, l, pots);
  const auto m_minus = husimi_from_state(space, minus, fam, grid, k, l);
  const auto m_plus = husimi_from_state(space, plus, fam, grid, k, l);
  const std::size_t total = rep.m.values.size();
  const std::size_t Z = grid.points();

  HusimiFamily hf;
  hf.grid = grid;
  hf.ctx = mid.ctx;
  hf.max_order = n + 1;
  hf.insert(rep.m);
  for (auto [kk, ll] : {std::pair{k + 1, l}, std::pair{k, l + 1}}) {
    if (kk > mid.N1 || ll > mid.N2)
      hf.insert(zero_measure(kk, ll, grid, mid.ctx));
    else
      hf.insert(husimi_from_state(space, mid, fam, grid, kk, ll));
  }

  std::vector<Term> lhs, coll;
  {
    RealVec dt(total);
    for (std::size_t i = 0; i < total; ++i) dt[i] = (m_plus.values[i] - m_minus.values[i]) / (2.0 * h);
    lhs.push_back(Term{"dt", -1, Divergence::None, std::move(dt)});
  }
  for (int s = 0; s < n; ++s) {
    RealVec tr(total);
    const std::size_t stride = ipow(Z, n - 1 - s);
    for (std::size_t i = 0; i < total; ++i) tr[i] = grid.p((i / stride) % Z) * rep.m.values[i];
    lhs.push_back(Term{"transport", s, Divergence::Q, std::move(tr)});
    const int sp = s < k ? 1 : 2;
    for (int c : {1, 2})
      coll.push_back(Term{"C" + slot_tag(sp, c), s, Divergence::P, collision_flux(hf, k, l, s, c, pots)});
  }

  ConsistencyReport out;
  for (const auto& t : lhs) out.names.push_back(t.name);
  for (const auto& t : coll) out.names.push_back(t.name);
  for (const auto& t : rep.remainders) out.names.push_back(t.name);
  std::vector<double> imb(TestBattery::kSize), imb_without(TestBattery::kSize), rem(TestBattery::kSize);
  for (int b = 0; b < TestBattery::kSize; ++b) {
    std::vector<double> row;
    double budget = 0.0, e = 0.0, r = 0.0;
    for (const auto& t : lhs) {
      const double v = weak_pairing(t, grid, n, b);
      row.push_back(v);
      budget += std::abs(v);
      e += v;
    }
    for (const auto& t : coll) {
      const double v = weak_pairing(t, grid, n, b);
      row.push_back(v);
      budget += std::abs(v);
      e -= v;
    }
    for (const auto& t : rep.remainders) {
      const double v = weak_pairing(t, grid, n, b);
      row.push_back(v);
      budget += std::abs(v);
      r += v;
    }
    out.scale = std::max(out.scale, budget);
    imb[b] = std::abs(e - r);
    imb_without[b] = std::abs(e);
    rem[b] = std::abs(r);
    out.pairings.push_back(std::move(row));
  }
  for (int b = 0; b < TestBattery::kSize; ++b) {
    out.gap = std::max(out.gap, imb[b]);
    out.gap_without = std::max(out.gap_without, imb_without[b]);
    out.remainder_weak = std::max(out.remainder_weak, rem[b]);
  }
  if (out.scale > 0.0) {
    out.gap /= out.scale;
    out.gap_without /= out.scale;
  }
  return out;
}

ManyBodyState swap_species(const FockSpace& space, const ManyBodyState& s) {
  ScalingContext c = s.ctx;
  std::swap(c.N1, c.N2);
  ManyBodyState r = zero_state(space, c, s.N2, s.N1);
  if (!s.basis || !r.basis) return r;
  const std::size_t n1 = s.basis->species(1).size(), n2 = s.basis->species(2).size();
  for (std::size_t i1 = 0; i1 < n1; ++i1)
    for (std::size_t i2 = 0; i2 < n2; ++i2)
      r.amp[static_cast<Eigen::Index>(i2 * n1 + i1)] = s.amp[static_cast<Eigen::Index>(i1 * n2 + i2)];
  return r;
}

}  // namespace v2s
