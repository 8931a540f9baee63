#include "v2s/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace v2s {

double DiscreteMeasure::total_mass() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

void DiscreteMeasure::add(const double* x, double w) {
  coords.insert(coords.end(), x, x + dim);
  weights.push_back(w);
}

double ground_distance(const DiscreteMeasure& a, std::size_t i, const DiscreteMeasure& b,
                       std::size_t j) {
  const double* x = a.point(i);
  const double* y = b.point(j);
  double s = 0.0;
  for (int k = 0; k < a.dim; ++k) {
    double d = x[k] - y[k];
    if (k == 0 && a.period > 0.0) d = min_image(d, a.period);
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

void check_pair(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  if (a.dim != b.dim) throw InvalidInput("measures live in different dimensions");
  if (std::abs(a.period - b.period) > 1e-12 * std::max(1.0, a.period))
    throw InvalidInput("measures use different periods");
  for (double w : a.weights)
    if (w < 0.0 || !std::isfinite(w)) throw InvalidInput("negative or non-finite weight");
  for (double w : b.weights)
    if (w < 0.0 || !std::isfinite(w)) throw InvalidInput("negative or non-finite weight");
}

// Transportation problem by the primal network simplex on the complete
// bipartite graph with an artificial root. Non-tree arcs carry zero flow.
class NetworkSimplex {
 public:
  NetworkSimplex(const DiscreteMeasure& a, const DiscreteMeasure& b, const RealVec& sa,
                 const RealVec& sb)
      : A_(a), B_(b), na_(a.size()), nb_(b.size()) {
    V_ = na_ + nb_ + 1;
    root_ = V_ - 1;
    double cmax = 0.0;
    for (std::size_t i = 0; i < na_; ++i)
      for (std::size_t j = 0; j < nb_; ++j) cmax = std::max(cmax, cost_real(i, j));
    bigM_ = 1.0 + cmax * static_cast<double>(V_);
    scale_ = std::max(cmax, 1e-300);
    parent_.assign(V_, root_);
    arc_.resize(V_);
    up_.assign(V_, 1);
    flow_.assign(V_, 0.0);
    pi_.assign(V_, 0.0);
    for (std::size_t i = 0; i < na_; ++i) {
      arc_[i] = na_ * nb_ + i;  // i -> root
      up_[i] = 1;
      flow_[i] = sa[i];
    }
    for (std::size_t j = 0; j < nb_; ++j) {
      arc_[na_ + j] = na_ * nb_ + na_ + j;  // root -> j
      up_[na_ + j] = 0;
      flow_[na_ + j] = sb[j];
    }
    parent_[root_] = root_;
    recompute_potentials();
  }

  long solve() {
    const std::size_t arcs = na_ * nb_;
    const std::size_t block = std::max<std::size_t>(64, static_cast<std::size_t>(std::sqrt(double(arcs))));
    std::size_t next = 0;
    long pivots = 0;
    const double tol = 1e-12 * scale_;
    for (;;) {
      std::size_t best = arcs;
      double best_rc = -tol;
      std::size_t scanned = 0;
      while (scanned < arcs) {
        const std::size_t stop = std::min(scanned + block, arcs);
        for (; scanned < stop; ++scanned) {
          const std::size_t e = next;
          next = next + 1 == arcs ? 0 : next + 1;
          const std::size_t i = e / nb_, j = e % nb_;
          const double rc = cost_real(i, j) + pi_[i] - pi_[na_ + j];
          if (rc < best_rc) {
            best_rc = rc;
            best = e;
          }
        }
        if (best != arcs) break;
      }
      if (best == arcs) break;
      pivot(best);
      ++pivots;
      if (pivots > 50'000'000) throw NonConvergence("network simplex pivot limit reached");
    }
    return pivots;
  }

  double objective() const {
    double s = 0.0;
    for (std::size_t v = 0; v < V_; ++v)
      if (v != root_) s += flow_[v] * cost_arc(arc_[v]);
    return s;
  }

  double artificial_flow() const {
    double s = 0.0;
    for (std::size_t v = 0; v < V_; ++v)
      if (v != root_ && arc_[v] >= na_ * nb_) s += flow_[v];
    return s;
  }

 private:
  double cost_real(std::size_t i, std::size_t j) const { return ground_distance(A_, i, B_, j); }
  double cost_arc(std::size_t e) const { return e < na_ * nb_ ? cost_real(e / nb_, e % nb_) : bigM_; }
  std::size_t tail(std::size_t e) const {
    if (e < na_ * nb_) return e / nb_;
    if (e < na_ * nb_ + na_) return e - na_ * nb_;
    return root_;
  }
  std::size_t head(std::size_t e) const {
    if (e < na_ * nb_) return na_ + e % nb_;
    if (e < na_ * nb_ + na_) return root_;
    return na_ + (e - na_ * nb_ - na_);
  }

  void recompute_potentials() {
    // children lists by counting sort of the parent array, then preorder
    std::vector<std::size_t> start(V_ + 1, 0), kids(V_);
    for (std::size_t v = 0; v < V_; ++v)
      if (v != root_) ++start[parent_[v] + 1];
    for (std::size_t v = 0; v < V_; ++v) start[v + 1] += start[v];
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t v = 0; v < V_; ++v)
      if (v != root_) kids[fill[parent_[v]]++] = v;
    std::vector<std::size_t> stack{root_};
    pi_[root_] = 0.0;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t k = start[u]; k < start[u + 1]; ++k) {
        const std::size_t v = kids[k];
        // tree arcs have zero reduced cost: c + pi_tail - pi_head = 0
        const double c = cost_arc(arc_[v]);
        pi_[v] = up_[v] ? pi_[u] - c : pi_[u] + c;
        stack.push_back(v);
      }
    }
  }

  std::vector<std::size_t> path_to_root(std::size_t v) const {
    std::vector<std::size_t> p{v};
    while (v != root_) {
      v = parent_[v];
      p.push_back(v);
    }
    return p;
  }

  void pivot(std::size_t e) {
    const std::size_t u = tail(e), v = head(e);
    // join node
    const auto pu = path_to_root(u), pv = path_to_root(v);
    std::size_t iu = pu.size() - 1, iv = pv.size() - 1;
    while (iu > 0 && iv > 0 && pu[iu - 1] == pv[iv - 1]) {
      --iu;
      --iv;
    }
    // cycle orientation u -> v, then v up to the join, then join down to u.
    // Traversal order from the join: down the u side, the entering arc, up the v side.
    double delta = std::numeric_limits<double>::infinity();
    std::size_t leave = V_;  // node whose pred arc leaves; V_ means the entering arc
    bool leave_on_u = false;
    // u side, from the join downwards: arc between pu[k] and pu[k+1] stored at pu[k]
    for (std::size_t k = iu; k-- > 0;) {
      const std::size_t w = pu[k];
      // traversed parent -> w: forward if the arc points down
      if (up_[w] && flow_[w] <= delta) {
        delta = flow_[w];
        leave = w;
        leave_on_u = true;
      }
    }
    // v side, from v upwards to the join
    for (std::size_t k = 0; k < iv; ++k) {
      const std::size_t w = pv[k];
      // traversed w -> parent: backward if the arc points down
      if (!up_[w] && flow_[w] <= delta) {
        delta = flow_[w];
        leave = w;
        leave_on_u = false;
      }
    }
    if (!std::isfinite(delta)) throw InternalError("unbounded transport cycle");
    // augment
    for (std::size_t k = 0; k < iu; ++k) {
      const std::size_t w = pu[k];
      flow_[w] += up_[w] ? -delta : delta;
    }
    for (std::size_t k = 0; k < iv; ++k) {
      const std::size_t w = pv[k];
      flow_[w] += up_[w] ? delta : -delta;
    }
    // re-hang the subtree below the leaving arc from the entering arc
    const std::size_t y = leave_on_u ? v : u;
    const auto& path = leave_on_u ? pu : pv;
    // path[0] = x ... up to leave
    std::size_t k_end = 0;
    while (path[k_end] != leave) ++k_end;
    // reverse parent pointers along path[0..k_end]
    std::size_t prev_node = y;
    std::size_t prev_arc = e;
    int prev_up = leave_on_u ? 1 : 0;  // entering arc u->v: x = u points up to y = v
    double prev_flow = delta;
    for (std::size_t k = 0; k <= k_end; ++k) {
      const std::size_t w = path[k];
      const std::size_t old_arc = arc_[w];
      const int old_up = up_[w];
      const double old_flow = flow_[w];
      parent_[w] = prev_node;
      arc_[w] = prev_arc;
      up_[w] = prev_up;
      flow_[w] = prev_flow;
      prev_node = w;
      prev_arc = old_arc;
      prev_up = !old_up;
      prev_flow = old_flow;
    }
    recompute_potentials();
  }

  const DiscreteMeasure& A_;
  const DiscreteMeasure& B_;
  std::size_t na_, nb_, V_, root_;
  double bigM_ = 1.0, scale_ = 1.0;
  std::vector<std::size_t> parent_, arc_;
  std::vector<int> up_;
  RealVec flow_, pi_;
};

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

W1Result sinkhorn(const DiscreteMeasure& A, const DiscreteMeasure& B, const RealVec& a,
                  const RealVec& b, const W1Options& opt) {
  const std::size_t n = A.size(), m = B.size();
  std::vector<double> C(n * m);
  double cmax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      C[i * m + j] = ground_distance(A, i, B, j);
      cmax = std::max(cmax, C[i * m + j]);
    }
  W1Result r;
  if (cmax == 0.0) return r;
  RealVec la(n), lb(m);
  for (std::size_t i = 0; i < n; ++i) la[i] = a[i] > 0 ? std::log(a[i]) : -1e300;
  for (std::size_t j = 0; j < m; ++j) lb[j] = b[j] > 0 ? std::log(b[j]) : -1e300;
  RealVec f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
  double eps = cmax;
  long it = 0;
  std::vector<double> P(n * m);
  for (;;) {
    // a few sweeps at this temperature
    for (int s = 0; s < 50; ++s, ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - C[i * m + j]) / eps + lb[j];
        f[i] = -eps * log_sum_exp(buf.data(), m);
      }
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - C[i * m + j]) / eps + la[i];
        g[j] = -eps * log_sum_exp(buf.data(), n);
      }
    }
    // plan, then rounding onto the exact marginals
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        P[i * m + j] = std::exp((f[i] + g[j] - C[i * m + j]) / eps + la[i] + lb[j]);
    RealVec rs(n, 0.0), cs(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) rs[i] += P[i * m + j];
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rs[i] > 0 ? std::min(1.0, a[i] / rs[i]) : 0.0;
      for (std::size_t j = 0; j < m; ++j) P[i * m + j] *= x;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) cs[j] += P[i * m + j];
    for (std::size_t j = 0; j < m; ++j) {
      const double y = cs[j] > 0 ? std::min(1.0, b[j] / cs[j]) : 0.0;
      for (std::size_t i = 0; i < n; ++i) P[i * m + j] *= y;
    }
    std::fill(rs.begin(), rs.end(), 0.0);
    std::fill(cs.begin(), cs.end(), 0.0);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        rs[i] += P[i * m + j];
        cs[j] += P[i * m + j];
      }
    RealVec ea(n), eb(m);
    for (std::size_t i = 0; i < n; ++i) err += ea[i] = a[i] - rs[i];
    for (std::size_t j = 0; j < m; ++j) eb[j] = b[j] - cs[j];
    double primal = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double add = err > 0 ? ea[i] * eb[j] / err : 0.0;
        primal += (P[i * m + j] + add) * C[i * m + j];
      }
    // dual bound from the c-transform of f
    RealVec gt(m), ft(n);
    for (std::size_t j = 0; j < m; ++j) {
      double v = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) v = std::min(v, C[i * m + j] - f[i]);
      gt[j] = v;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double v = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) v = std::min(v, C[i * m + j] - gt[j]);
      ft[i] = v;
    }
    double dual = 0.0;
    for (std::size_t i = 0; i < n; ++i) dual += a[i] * ft[i];
    for (std::size_t j = 0; j < m; ++j) dual += b[j] * gt[j];
    r.value = primal;
    r.lower_bound = dual;
    r.gap = primal > 0 ? (primal - dual) / primal : 0.0;
    r.iterations = it;
    if (r.gap <= opt.target_gap) return r;
    if (it >= opt.max_iterations)
      throw NonConvergence("Sinkhorn stopped with certified gap " + std::to_string(r.gap));
    eps = std::max(eps * 0.5, 1e-4 * cmax);
  }
}

DiscreteMeasure positive_part(const DiscreteMeasure& m) {
  DiscreteMeasure r;
  r.dim = m.dim;
  r.period = m.period;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.weights[i] > 0.0) r.add(m.point(i), m.weights[i]);
  return r;
}

}  // namespace

W1Result wasserstein1(const DiscreteMeasure& a_in, const DiscreteMeasure& b_in, W1Mode mode,
                      const W1Options& opt) {
  check_pair(a_in, b_in);
  // zero-weight points would make the initial tree degenerate
  const DiscreteMeasure a = positive_part(a_in), b = positive_part(b_in);
  const double ma = a.total_mass(), mb = b.total_mass();
  W1Result r;
  if (ma == 0.0 && mb == 0.0) return r;
  if (!(ma > 0.0) || !(mb > 0.0)) throw InvalidInput("one measure has zero mass");
  r.mass_adjustment = std::abs(ma - mb);
  // work with normalised weights, report in units of a's mass
  RealVec wa(a.weights), wb(b.weights);
  for (auto& w : wa) w /= ma;
  for (auto& w : wb) w /= mb;
  if (mode == W1Mode::Exact) {
    if (a.size() > opt.max_support || b.size() > opt.max_support)
      throw SupportTooLarge("exact transport limited to " + std::to_string(opt.max_support) +
                            " points per measure");
    NetworkSimplex ns(a, b, wa, wb);
    r.iterations = ns.solve();
    if (ns.artificial_flow() > 1e-9) throw NonConvergence("transport left flow on artificial arcs");
    r.value = ns.objective() * ma;
    r.lower_bound = r.value;
    return r;
  }
  auto s = sinkhorn(a, b, wa, wb, opt);
  s.value *= ma;
  s.lower_bound *= ma;
  s.mass_adjustment = r.mass_adjustment;
  return s;
}

double wasserstein1_marginal_1d(const DiscreteMeasure& a, const DiscreteMeasure& b, int axis) {
  check_pair(a, b);
  if (axis < 0 || axis >= a.dim) throw InvalidInput("axis outside the measure dimension");
  const double ma = a.total_mass(), mb = b.total_mass();
  if (!(ma > 0.0) || !(mb > 0.0)) return 0.0;
  std::vector<std::pair<double, double>> ev;
  for (std::size_t i = 0; i < a.size(); ++i) ev.push_back({a.point(i)[axis], a.weights[i] / ma});
  for (std::size_t j = 0; j < b.size(); ++j) ev.push_back({b.point(j)[axis], -b.weights[j] / mb});
  std::sort(ev.begin(), ev.end());
  double F = 0.0, s = 0.0;
  for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
    F += ev[k].second;
    s += std::abs(F) * (ev[k + 1].first - ev[k].first);
  }
  return s * ma;
}

PhaseMoments phase_moments(const RealVec& m, const PhaseGrid& g) {
  if (g.d != 1) throw InvalidInput("phase moments are implemented for d = 1");
  PhaseMoments r;
  for (std::size_t z = 0; z < m.size(); ++z) {
    const double q = g.q(z), p = g.p(z), v = m[z];
    r.mass += v;
    r.mean_q += q * v;
    r.mean_p += p * v;
    r.abs_q += std::abs(q) * v;
    r.q2 += q * q * v;
    r.p2 += p * p * v;
  }
  const double w = g.weight() / (2.0 * kPi);
  r.mass *= w;
  r.mean_q *= w;
  r.mean_p *= w;
  r.abs_q *= w;
  r.q2 *= w;
  r.p2 *= w;
  return r;
}

Aggregated aggregate(const RealVec& m, const PhaseGrid& g, int bq, int bp) {
  if (g.d != 1) throw InvalidInput("aggregation is implemented for d = 1");
  if (bq < 1 || bp < 1 || g.nq % bq != 0 || g.np % bp != 0)
    throw InvalidInput("block counts must divide the grid");
  const int sq = g.nq / bq, sp = g.np / bp;
  Aggregated r;
  r.measure.dim = 2;
  r.measure.period = g.q_length();
  const double w = g.weight() / (2.0 * kPi);
  double mass = 0.0;
  for (int I = 0; I < bq; ++I)
    for (int J = 0; J < bp; ++J) {
      double s = 0.0;
      for (int i = 0; i < sq; ++i)
        for (int j = 0; j < sp; ++j) s += m[static_cast<std::size_t>(I * sq + i) * g.np + J * sp + j];
      const double x[2] = {g.q0 + (I * sq + 0.5 * (sq - 1)) * g.dq, g.p0 + (J * sp + 0.5 * (sp - 1)) * g.dp};
      r.measure.add(x, s * w);
      mass += std::abs(s * w);
    }
  const double diam = std::hypot((sq - 1) * g.dq, (sp - 1) * g.dp);
  r.error_bound = 0.5 * diam * mass;
  return r;
}

}  // namespace v2s
