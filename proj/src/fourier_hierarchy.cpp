#include "v2s/fourier_hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace v2s {

namespace {

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Base index and weights of a 4-point Lagrange stencil on a uniform axis.
struct Stencil {
  int base = 0;
  double w[4] = {0, 0, 0, 0};
};

Stencil lagrange4(double pos, int n) {
  // pos in node units, 0 <= pos <= n - 1, n >= 4
  Stencil s;
  s.base = std::clamp(static_cast<int>(std::floor(pos)) - 1, 0, n - 4);
  const double x = pos - s.base;
  s.w[0] = -(x - 1) * (x - 2) * (x - 3) / 6.0;
  s.w[1] = x * (x - 2) * (x - 3) / 2.0;
  s.w[2] = -x * (x - 1) * (x - 3) / 2.0;
  s.w[3] = x * (x - 1) * (x - 2) / 6.0;
  return s;
}

bool inside(double x, double half) { return std::abs(x) <= half * (1.0 + 1e-12); }

double species_weight(const ScalingContext& ctx, int k, int l) {
  double c = 1.0;
  if (k > 0) c *= std::pow(ctx.n1(), k);
  if (l > 0) c *= std::pow(ctx.n2(), l);
  return c;
}

}  // namespace

void FourierGrid::validate() const {
  if (!(xi_max > 0.0)) throw InvalidInput("probe box half-width must be positive");
  if (nodes < 4) throw InvalidInput("probe grid needs at least 4 nodes per axis");
}

const CharLevel& CharFamily::at(int k, int l) const {
  auto it = levels.find({k, l});
  if (it == levels.end())
    throw MissingLevel("characteristic family has no level (" + std::to_string(k) + "," +
                       std::to_string(l) + ")");
  return it->second;
}

std::size_t CharFamily::axis_size(int order) const {
  return ipow(static_cast<std::size_t>(fgrid.nodes), 2 * order);
}

void CharFamily::insert(CharLevel c) {
  if (c.values.size() != axis_size(c.order())) throw InvalidInput("level does not match the probe grid");
  levels[{c.k, c.l}] = std::move(c);
}

// ---- characteristic functions ----

namespace {

CharLevel contract(const RealVec& values, const PhaseGrid& grid, int k, int l, double norm,
                   const FourierGrid& fgrid) {
  fgrid.validate();
  if (grid.d != 1) throw InvalidInput("characteristic functions are implemented for d = 1");
  const int n = k + l;
  const std::size_t Z = grid.points();
  const std::size_t F = static_cast<std::size_t>(fgrid.nodes) * fgrid.nodes;
  if (values.size() != ipow(Z, n)) throw InvalidInput("grid function does not match its slots");
  double total = 0.0;
  for (double v : values) total += v;
  const double mu0 = total * norm;
  if (!std::isfinite(mu0) || std::abs(mu0 - 1.0) > kCharNormTolerance)
    throw NormalizationGap("characteristic function at the origin is " + std::to_string(mu0));
  std::vector<cplx> E(Z * F);
  for (std::size_t z = 0; z < Z; ++z)
    for (int a = 0; a < fgrid.nodes; ++a)
      for (int b = 0; b < fgrid.nodes; ++b)
        E[z * F + a * fgrid.nodes + b] = std::polar(1.0, fgrid.node(a) * grid.p(z) + fgrid.node(b) * grid.q(z));
  std::vector<cplx> cur(values.begin(), values.end());
  // replace the phase index of each slot by its probe index, last slot first
  std::vector<std::size_t> dims(n, Z);
  for (int s = n - 1; s >= 0; --s) {
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < s; ++i) outer *= dims[i];
    for (int i = s + 1; i < n; ++i) inner *= dims[i];
    std::vector<cplx> next(outer * F * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t z = 0; z < Z; ++z) {
        const cplx* src = &cur[(o * Z + z) * inner];
        const cplx* e = &E[z * F];
        for (std::size_t f = 0; f < F; ++f) {
          cplx* dst = &next[(o * F + f) * inner];
          const cplx ef = e[f];
          for (std::size_t i = 0; i < inner; ++i) dst[i] += ef * src[i];
        }
      }
    cur.swap(next);
    dims[s] = F;
  }
  CharLevel c;
  c.k = k;
  c.l = l;
  c.values = std::move(cur);
  for (auto& v : c.values) v *= norm;
  return c;
}

}  // namespace

CharLevel to_characteristic(const HusimiMeasure& m, const FourierGrid& fgrid) {
  const double wn = species_weight(m.ctx, m.k, m.l);
  if (!(wn > 0.0)) throw InvalidInput("level refers to an absent species");
  const double norm = std::pow(m.grid.weight() / (2.0 * kPi), m.order()) / wn;
  return contract(m.values, m.grid, m.k, m.l, norm, fgrid);
}

CharLevel to_characteristic(const RealVec& m, const PhaseGrid& grid, double n_alpha, int species,
                            const FourierGrid& fgrid) {
  if (!(n_alpha > 0.0)) throw InvalidInput("species mass must be positive");
  const double norm = grid.weight() / (2.0 * kPi) / n_alpha;
  return contract(m, grid, species == 1 ? 1 : 0, species == 1 ? 0 : 1, norm, fgrid);
}

CharFamily to_characteristic(const HusimiFamily& fam, const FourierGrid& fgrid) {
  CharFamily c;
  c.fgrid = fgrid;
  c.ctx = fam.ctx;
  c.max_order = fam.max_order;
  for (const auto& [key, m] : fam.levels) {
    if (species_weight(fam.ctx, m.k, m.l) == 0.0) continue;
    c.insert(to_characteristic(m, fgrid));
  }
  return c;
}

cplx characteristic_value(const RealVec& m, const PhaseGrid& grid, double n_alpha, double xi,
                          double eta) {
  cplx acc = 0.0;
  for (std::size_t z = 0; z < grid.points(); ++z)
    if (m[z] != 0.0) acc += m[z] * std::polar(1.0, xi * grid.p(z) + eta * grid.q(z));
  return acc * grid.weight() / (2.0 * kPi * n_alpha);
}

// ---- one-particle table ----

OneParticleChar::OneParticleChar(const RealVec& m, const PhaseGrid& grid, double n_alpha,
                                 double xi_half, double eta_half, double spacing)
    : xi_half_(xi_half), eta_half_(eta_half), h_(spacing) {
  if (grid.d != 1) throw InvalidInput("characteristic tables are implemented for d = 1");
  if (!(n_alpha > 0.0) || !(spacing > 0.0) || !(xi_half > 0.0) || !(eta_half > 0.0))
    throw InvalidInput("invalid characteristic table");
  nx_ = static_cast<int>(std::ceil(2.0 * xi_half / spacing)) + 1;
  ne_ = static_cast<int>(std::ceil(2.0 * eta_half / spacing)) + 1;
  xi_half_ = 0.5 * (nx_ - 1) * spacing;
  eta_half_ = 0.5 * (ne_ - 1) * spacing;
  const double c = grid.weight() / (2.0 * kPi * n_alpha);
  // sum over p first for every xi node, then over q
  const int nq = grid.nq, np = grid.np;
  std::vector<cplx> A(static_cast<std::size_t>(nq) * nx_, 0.0);
  std::vector<cplx> ep(np);
  for (int a = 0; a < nx_; ++a) {
    const double xi = -xi_half_ + a * h_;
    for (int j = 0; j < np; ++j) ep[j] = std::polar(1.0, xi * (grid.p0 + j * grid.dp));
    for (int i = 0; i < nq; ++i) {
      cplx s = 0.0;
      const double* row = &m[static_cast<std::size_t>(i) * np];
      for (int j = 0; j < np; ++j) s += row[j] * ep[j];
      A[static_cast<std::size_t>(i) * nx_ + a] = s;
    }
  }
  std::vector<cplx> eq(static_cast<std::size_t>(nq) * ne_);
  for (int i = 0; i < nq; ++i)
    for (int b = 0; b < ne_; ++b)
      eq[static_cast<std::size_t>(i) * ne_ + b] = std::polar(1.0, (-eta_half_ + b * h_) * grid.q(i * np));
  values_.assign(static_cast<std::size_t>(nx_) * ne_, 0.0);
  for (int a = 0; a < nx_; ++a)
    for (int i = 0; i < nq; ++i) {
      const cplx s = A[static_cast<std::size_t>(i) * nx_ + a];
      if (s == 0.0) continue;
      cplx* dst = &values_[static_cast<std::size_t>(a) * ne_];
      const cplx* e = &eq[static_cast<std::size_t>(i) * ne_];
      for (int b = 0; b < ne_; ++b) dst[b] += s * e[b];
    }
  for (auto& v : values_) v *= c;
}

cplx OneParticleChar::operator()(double xi, double eta) const {
  if (!inside(xi, xi_half_) || !inside(eta, eta_half_))
    throw ExtrapolationNeeded("characteristic table queried outside its range");
  const Stencil sx = lagrange4(std::clamp((xi + xi_half_) / h_, 0.0, nx_ - 1.0), nx_);
  const Stencil se = lagrange4(std::clamp((eta + eta_half_) / h_, 0.0, ne_ - 1.0), ne_);
  cplx r = 0.0;
  for (int a = 0; a < 4; ++a) {
    const cplx* row = &values_[static_cast<std::size_t>(sx.base + a) * ne_ + se.base];
    cplx s = 0.0;
    for (int b = 0; b < 4; ++b) s += se.w[b] * row[b];
    r += sx.w[a] * s;
  }
  return r;
}

// ---- interaction picture ----

CharFamily interaction_rep(const CharFamily& fam, double t, double max_outside_fraction,
                           double* outside_fraction) {
  const int G = fam.fgrid.nodes;
  const double h = fam.fgrid.spacing(), X = fam.fgrid.xi_max;
  CharFamily out = fam;
  std::size_t outside = 0, total = 0;
  for (auto& [key, lev] : out.levels) {
    const int n = lev.order();
    const std::size_t size = lev.values.size();
    total += size;
    // count nodes with any slot leaving the box
    for (std::size_t idx = 0; idx < size; ++idx) {
      std::size_t r = idx;
      bool out_node = false;
      for (int a = 2 * n - 1; a >= 1; a -= 2) {
        const int ie = static_cast<int>(r % G);
        r /= G;
        const int ix = static_cast<int>(r % G);
        r /= G;
        if (!inside(fam.fgrid.node(ix) - fam.fgrid.node(ie) * t, X)) out_node = true;
      }
      if (out_node) ++outside;
    }
    for (int s = 0; s < n; ++s) {
      const std::size_t sx = ipow(G, 2 * n - 1 - 2 * s), se = sx / G;
      std::vector<cplx> next(size);
      for (std::size_t idx = 0; idx < size; ++idx) {
        const int ix = static_cast<int>((idx / sx) % G), ie = static_cast<int>((idx / se) % G);
        const double target = fam.fgrid.node(ix) - fam.fgrid.node(ie) * t;
        const Stencil st = lagrange4(std::clamp((target + X) / h, 0.0, G - 1.0), G);
        const std::size_t base = idx - static_cast<std::size_t>(ix) * sx;
        cplx v = 0.0;
        for (int a = 0; a < 4; ++a) v += st.w[a] * lev.values[base + static_cast<std::size_t>(st.base + a) * sx];
        next[idx] = v;
      }
      lev.values.swap(next);
    }
  }
  const double frac = total ? static_cast<double>(outside) / total : 0.0;
  if (outside_fraction) *outside_fraction = frac;
  if (frac > max_outside_fraction)
    throw ExtrapolationNeeded("shifted arguments leave the probe box at a fraction " +
                              std::to_string(frac) + " of the nodes");
  return out;
}

// ---- sources ----

cplx FamilySource::value(int k, int l, const double* args) const {
  if (!fam_.has(k, l)) {
    if (closure_) return closure_->value(k, l, args);
    throw DepthExceedsFamily("level (" + std::to_string(k) + "," + std::to_string(l) +
                             ") is beyond the stored family and no closure is set");
  }
  const auto& lev = fam_.at(k, l);
  const int n = k + l, G = fam_.fgrid.nodes;
  const double X = fam_.fgrid.xi_max, h = fam_.fgrid.spacing();
  std::vector<Stencil> st(2 * n);
  for (int a = 0; a < 2 * n; ++a) {
    if (!inside(args[a], X)) {
      if (policy_ == OutOfBox::Zero) return 0.0;
      throw ExtrapolationNeeded("argument outside the probe box");
    }
    st[a] = lagrange4(std::clamp((args[a] + X) / h, 0.0, G - 1.0), G);
  }
  const std::size_t combos = ipow(4, 2 * n);
  cplx acc = 0.0;
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t r = c, idx = 0;
    double w = 1.0;
    for (int a = 2 * n - 1; a >= 0; --a) {
      const int o = static_cast<int>(r % 4);
      r /= 4;
      w *= st[a].w[o];
    }
    r = c;
    std::size_t stride = 1;
    for (int a = 2 * n - 1; a >= 0; --a) {
      const int o = static_cast<int>(r % 4);
      r /= 4;
      idx += static_cast<std::size_t>(st[a].base + o) * stride;
      stride *= G;
    }
    acc += w * lev.values[idx];
  }
  return acc;
}

cplx FactorizedSource::value(int k, int l, const double* args) const {
  if ((k > 0 && (!s1_ || s1_->empty())) || (l > 0 && (!s2_ || s2_->empty())))
    throw InvalidInput("factorised closure lacks a species");
  cplx r = 1.0;
  for (int s = 0; s < k + l; ++s) {
    const OneParticleChar& f = s < k ? *s1_ : *s2_;
    r *= f.at(args[2 * s], args[2 * s + 1], t_);
  }
  return r;
}

CharFamily sample_family(const CharSource& src, const FourierGrid& fgrid, const ScalingContext& ctx,
                         int max_order) {
  CharFamily fam;
  fam.fgrid = fgrid;
  fam.ctx = ctx;
  fam.max_order = max_order;
  const int G = fgrid.nodes;
  for (int n = 1; n <= max_order; ++n)
    for (int k = 0; k <= n; ++k) {
      const int l = n - k;
      if ((k > 0 && ctx.N1 == 0) || (l > 0 && ctx.N2 == 0)) continue;
      CharLevel lev;
      lev.k = k;
      lev.l = l;
      lev.values.resize(ipow(G, 2 * n));
      std::vector<double> args(2 * n);
      for (std::size_t idx = 0; idx < lev.values.size(); ++idx) {
        std::size_t r = idx;
        for (int a = 2 * n - 1; a >= 0; --a) {
          args[a] = fgrid.node(static_cast<int>(r % G));
          r /= G;
        }
        lev.values[idx] = src.value(k, l, args.data());
      }
      fam.insert(std::move(lev));
    }
  return fam;
}

// ---- K operator ----

namespace {

using Inner = std::function<cplx(int, int, const double*)>;

struct EtaRule {
  RealVec nodes, weights;
};

const EtaRule& eta_rule(double B, int eta_nodes) {
  thread_local std::map<std::pair<double, int>, EtaRule> cache;
  auto key = std::make_pair(B, eta_nodes);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const int half = std::max(1, (eta_nodes + 1) / 2);
  EtaRule r;
  for (auto [a, b] : {std::pair{-B, 0.0}, std::pair{0.0, B}}) {
    const auto q = gauss_legendre(half, a, b);
    r.nodes.insert(r.nodes.end(), q.nodes.begin(), q.nodes.end());
    r.weights.insert(r.weights.end(), q.weights.begin(), q.weights.end());
  }
  return cache.emplace(key, std::move(r)).first->second;
}

cplx k_sum(int k, int l, const double* args, double t, const PotentialSet& pots,
           const ScalingContext& ctx, int eta_nodes, const Inner& inner) {
  const int n = k + l;
  cplx total = 0.0;
  std::vector<double> next(2 * (n + 1));
  for (int s = 0; s < n; ++s) {
    const int alpha = s < k ? 1 : 2;
    const double xi = args[2 * s], eta = args[2 * s + 1];
    const double lever = xi - eta * t;
    for (int beta : {1, 2}) {
      const Potential& v = pots.pair(alpha, beta);
      if (v.is_zero()) continue;
      if (!v.band_limited())
        throw BandLimitRequired("the Fourier hierarchy needs potentials with compact Fourier support");
      const double nb = beta == 1 ? ctx.n1() : ctx.n2();
      if (nb == 0.0) continue;
      const int nk = k + (beta == 1 ? 1 : 0), nl = l + (beta == 2 ? 1 : 0);
      const int ins = beta == 1 ? k : n;  // slot index of the new particle
      const auto& rule = eta_rule(v.fourier_band(), eta_nodes);
      cplx branch = 0.0;
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double zeta = rule.nodes[q];
        const double f = rule.weights[q] * v.fourier(zeta) * zeta;
        if (f == 0.0) continue;
        // old slots shifted, the new one inserted at `ins`
        int o = 0;
        for (int j = 0; j <= n; ++j) {
          if (j == ins) {
            next[2 * j] = -zeta * t;
            next[2 * j + 1] = -zeta;
            continue;
          }
          next[2 * j] = args[2 * o];
          next[2 * j + 1] = args[2 * o + 1];
          if (o == s) {
            next[2 * j] += zeta * t;
            next[2 * j + 1] += zeta;
          }
          ++o;
        }
        branch += f * inner(nk, nl, next.data());
      }
      total += nb * lever * branch;
    }
  }
  return total;
}

}  // namespace

cplx apply_K_at(const CharSource& src, int k, int l, const double* args, double t,
                const PotentialSet& pots, const ScalingContext& ctx, int eta_nodes) {
  if (k < 0 || l < 0 || k + l < 1) throw InvalidInput("order must be positive");
  return k_sum(k, l, args, t, pots, ctx, eta_nodes,
               [&](int kk, int ll, const double* a) { return src.value(kk, ll, a); });
}

CharFamily apply_K(const CharFamily& fam, double t, const PotentialSet& pots, int eta_nodes,
                   OutOfBox policy) {
  const FamilySource src(fam, policy);
  CharFamily out;
  out.fgrid = fam.fgrid;
  out.ctx = fam.ctx;
  out.max_order = std::max(1, fam.max_order - 1);
  const int G = fam.fgrid.nodes;
  for (const auto& [key, lev] : fam.levels) {
    const int n = lev.order();
    if (n >= fam.max_order) continue;
    CharLevel o;
    o.k = lev.k;
    o.l = lev.l;
    o.values.resize(lev.values.size());
    std::vector<double> args(2 * n);
    for (std::size_t idx = 0; idx < o.values.size(); ++idx) {
      std::size_t r = idx;
      for (int a = 2 * n - 1; a >= 0; --a) {
        args[a] = fam.fgrid.node(static_cast<int>(r % G));
        r /= G;
      }
      o.values[idx] = apply_K_at(src, lev.k, lev.l, args.data(), t, pots, fam.ctx, eta_nodes);
    }
    out.insert(std::move(o));
  }
  return out;
}

// ---- Picard series ----

PicardConstants picard_constants(const PotentialSet& pots, const FourierGrid& fgrid) {
  PicardConstants c;
  for (const Potential* v : {&pots.v11, &pots.v12, &pots.v22}) {
    if (v->is_zero()) continue;
    if (!v->band_limited())
      throw BandLimitRequired("the Fourier hierarchy needs potentials with compact Fourier support");
    c.A = std::max(c.A, v->fourier_amp());
    c.B = std::max(c.B, v->fourier_band());
    c.support_volume = std::max(c.support_volume, v->support_volume());
  }
  c.C = fgrid.xi_max;
  c.D = fgrid.xi_max;
  return c;
}

double horizon_tau(const PicardConstants& c) {
  if (c.A == 0.0 || c.B == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(8.0 * c.support_volume * c.B * c.A);
}

PicardConfig picard_config(const PotentialSet& pots, const FourierGrid& fgrid, double t, int depth) {
  PicardConfig cfg;
  cfg.depth = depth;
  cfg.t = t;
  cfg.constants = picard_constants(pots, fgrid);
  cfg.horizon = horizon_tau(cfg.constants);
  return cfg;
}

double PicardResult::term_sup(int j) const {
  double s = 0.0;
  for (const auto& v : terms.at(j)) s = std::max(s, std::abs(v));
  return s;
}

std::vector<std::vector<double>> probe_box(const FourierGrid& fgrid, int order) {
  const int G = fgrid.nodes;
  const std::size_t total = ipow(G, 2 * order);
  std::vector<std::vector<double>> out(total, std::vector<double>(2 * order));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t r = idx;
    for (int a = 2 * order - 1; a >= 0; --a) {
      out[idx][a] = fgrid.node(static_cast<int>(r % G));
      r /= G;
    }
  }
  return out;
}

namespace {

struct Series {
  const CharSource& src;
  const PotentialSet& pots;
  const ScalingContext& ctx;
  const std::vector<QuadLevel>& schedule;
  int eta_boost = 1;  // multiplies the eta nodes of the outermost level

  const QuadLevel& level(int m) const {
    return schedule[std::min<std::size_t>(m, schedule.size() - 1)];
  }

  // reference rules on [-1, 1], one per node count
  const QuadratureRule& time_rule(int n) const {
    thread_local std::map<int, QuadratureRule> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
    return it->second;
  }

  // j nested K applications integrated over 0 < t_j < ... < t_1 < t
  cplx term(int j, double t, int k, int l, const double* args, int m) const {
    if (j == 0) return src.value(k, l, args);
    const QuadLevel& q = level(m);
    const auto& rule = time_rule(q.time_nodes);
    const int eta = m == 0 ? q.eta_nodes * eta_boost : q.eta_nodes;
    cplx acc = 0.0;
    for (int i = 0; i < q.time_nodes; ++i) {
      const double t1 = 0.5 * t * (rule.nodes[i] + 1.0);
      acc += 0.5 * t * rule.weights[i] *
             k_sum(k, l, args, t1, pots, ctx, eta, [&](int kk, int ll, const double* a) {
               return term(j - 1, t1, kk, ll, a, m + 1);
             });
    }
    return acc;
  }
};

}  // namespace

PicardResult picard_iterate(const CharSource& mu0, int k, int l,
                            const std::vector<std::vector<double>>& probes, const PicardConfig& cfg,
                            const PotentialSet& pots, const ScalingContext& ctx) {
  if (cfg.depth < 1) throw InvalidInput("Picard depth must be at least 1");
  if (k < 0 || l < 0 || k + l < 1) throw InvalidInput("order must be positive");
  if (cfg.schedule.empty()) throw InvalidInput("empty quadrature schedule");
  const double tau = horizon_tau(picard_constants(pots, FourierGrid{}));
  if (std::abs(cfg.t) > tau * (1.0 + 1e-12))
    throw InvalidInput("time beyond the uniqueness horizon tau = " + std::to_string(tau));
  for (const auto& p : probes)
    if (static_cast<int>(p.size()) != 2 * (k + l)) throw InvalidInput("probe arguments do not match the level");

  PicardResult res;
  res.k = k;
  res.l = l;
  res.probes = probes;
  res.terms.assign(cfg.depth, std::vector<cplx>(probes.size(), 0.0));
  res.sum.assign(probes.size(), 0.0);
  Series series{mu0, pots, ctx, cfg.schedule};
  for (int j = 0; j < cfg.depth; ++j)
    for (std::size_t p = 0; p < probes.size(); ++p) {
      res.terms[j][p] = series.term(j, cfg.t, k, l, probes[p].data(), 0);
      res.sum[p] += res.terms[j][p];
    }
  if (cfg.depth >= 2) {
    Series fine{mu0, pots, ctx, cfg.schedule, 2};
    for (std::size_t p = 0; p < probes.size(); ++p)
      res.eta_quadrature_error = std::max(
          res.eta_quadrature_error, std::abs(fine.term(1, cfg.t, k, l, probes[p].data(), 0) - res.terms[1][p]));
  }
  return res;
}

double delta_L_bound(const PicardConfig& cfg, int k, int l) {
  const auto& c = cfg.constants;
  const int L = cfg.depth;
  if (L < 1) throw InvalidInput("depth must be at least 1");
  if (c.A == 0.0) return 0.0;
  const double n = k + l, t = std::abs(cfg.t);
  const double a = (c.C + c.D * t) * n;
  double prod = a;
  for (int m = 1; m < L; ++m) prod *= a + (n + m) * c.B * t;
  double fact = 1.0;
  for (int m = 2; m <= L; ++m) fact *= m;
  return std::pow(4.0 * c.support_volume * c.A, L) * prod * std::pow(t, L) / fact;
}

}  // namespace v2s
