#include "v2s/fock.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <random>
#include <sstream>

namespace v2s {

namespace {

struct BinomialTable {
  std::uint64_t c[65][65] = {};
  BinomialTable() {
    for (int n = 0; n <= 64; ++n) {
      c[n][0] = 1;
      for (int k = 1; k <= n; ++k) c[n][k] = c[n - 1][k - 1] + (k <= n - 1 ? c[n - 1][k] : 0);
    }
  }
};

const BinomialTable& binom() {
  static const BinomialTable t;
  return t;
}

inline int parity_below(std::uint64_t mask, int site) {
  const std::uint64_t below = (site == 0) ? 0 : (mask & ((std::uint64_t{1} << site) - 1));
  return std::popcount(below) & 1;
}

inline int parity_between(std::uint64_t mask, int a, int b) {
  if (a > b) std::swap(a, b);
  std::uint64_t m = mask >> (a + 1);
  const int width = b - a - 1;
  if (width <= 0) return 0;
  m &= (width >= 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
  return std::popcount(m) & 1;
}

std::size_t checked_dim(int sites, int N1, int N2, std::size_t cap) {
  const double d = static_cast<double>(binomial(sites, N1)) * static_cast<double>(binomial(sites, N2));
  if (d > static_cast<double>(cap)) {
    std::ostringstream os;
    os << "sector (" << N1 << "," << N2 << ") on " << sites << " sites has dimension " << d
       << " above the cap " << cap;
    throw CapacityExceeded(os.str());
  }
  return static_cast<std::size_t>(d);
}

}  // namespace

std::uint64_t binomial(int n, int k) {
  if (n < 0 || k < 0 || k > n || n > 64) return 0;
  return binom().c[n][k];
}

SpeciesBasis::SpeciesBasis(int sites, int count) : sites_(sites), count_(count) {
  if (sites > 64) throw CapacityExceeded("bitset basis supports at most 64 lattice sites");
  if (count < 0 || count > sites) throw InvalidInput("particle count outside [0, sites]");
  masks_.reserve(binomial(sites, count));
  if (count == 0) {
    masks_.push_back(0);
    return;
  }
  std::uint64_t m = (count == 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << count) - 1);
  const std::uint64_t limit = (sites == 64) ? 0 : (std::uint64_t{1} << sites);
  while (true) {
    masks_.push_back(m);
    if (count == sites) break;
    // Gosper: next integer with the same popcount
    const std::uint64_t c = m & (~m + 1);
    const std::uint64_t r = m + c;
    if (r == 0) break;
    m = (((r ^ m) >> 2) / c) | r;
    if (limit != 0 && m >= limit) break;
  }
}

std::size_t SpeciesBasis::rank(std::uint64_t mask) const {
  std::size_t r = 0;
  int i = 0;
  while (mask) {
    const int p = std::countr_zero(mask);
    r += binom().c[p][i + 1];
    ++i;
    mask &= mask - 1;
  }
  return r;
}

TwoSpeciesBasis::TwoSpeciesBasis(int sites, int N1, int N2) : b1_(sites, N1), b2_(sites, N2) {}

std::shared_ptr<const TwoSpeciesBasis> build_basis(const LatticeConfig& lattice,
                                                   const ScalingContext& ctx, std::size_t cap) {
  ctx.validate();
  lattice.validate(ctx);
  if (lattice.sites() > 64) throw CapacityExceeded("bitset basis supports at most 64 lattice sites");
  checked_dim(lattice.sites(), ctx.N1, ctx.N2, cap);
  return std::make_shared<const TwoSpeciesBasis>(lattice.sites(), ctx.N1, ctx.N2);
}

FockSpace::FockSpace(LatticeConfig lattice, std::size_t cap) : lattice_(lattice), cap_(cap) {
  if (lattice_.sites() > 64) throw CapacityExceeded("bitset basis supports at most 64 lattice sites");
}

std::shared_ptr<const TwoSpeciesBasis> FockSpace::sector(int N1, int N2) const {
  const int K = sites();
  if (N1 < 0 || N2 < 0 || N1 > K || N2 > K) return nullptr;
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find({N1, N2});
  if (it != cache_.end()) return it->second;
  checked_dim(K, N1, N2, cap_);
  auto b = std::make_shared<const TwoSpeciesBasis>(K, N1, N2);
  cache_[{N1, N2}] = b;
  return b;
}

ManyBodyState zero_state(const FockSpace& space, const ScalingContext& ctx, int N1, int N2) {
  ManyBodyState s;
  s.ctx = ctx;
  s.N1 = N1;
  s.N2 = N2;
  s.basis = space.sector(N1, N2);
  if (s.basis) s.amp = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(s.basis->dim()));
  return s;
}

ManyBodyState random_state(const FockSpace& space, const ScalingContext& ctx, std::uint64_t seed) {
  ManyBodyState s = zero_state(space, ctx, ctx.N1, ctx.N2);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < s.amp.size(); ++i) s.amp[i] = cplx(nd(rng), nd(rng));
  s.amp /= s.amp.norm();
  return s;
}

namespace {

template <bool Create>
ManyBodyState apply_single(const FockSpace& space, const ManyBodyState& s, int species, int site) {
  if (species != 1 && species != 2) throw InvalidInput("species must be 1 or 2");
  if (site < 0 || site >= space.sites()) throw InvalidInput("site index out of range");
  const int delta = Create ? 1 : -1;
  const int t1 = s.N1 + (species == 1 ? delta : 0);
  const int t2 = s.N2 + (species == 2 ? delta : 0);
  ManyBodyState out = zero_state(space, s.ctx, t1, t2);
  if (!out.basis || !s.basis) return out;
  const std::uint64_t bit = std::uint64_t{1} << site;
  const auto& src = *s.basis;
  const auto& dst = *out.basis;
  for (std::size_t i = 0; i < src.dim(); ++i) {
    const cplx a = s.amp[static_cast<Eigen::Index>(i)];
    if (a == 0.0) continue;
    std::uint64_t m1 = src.mask1(i), m2 = src.mask2(i);
    std::uint64_t& m = (species == 1) ? m1 : m2;
    const bool occ = (m & bit) != 0;
    if (occ == Create) continue;
    const int par = parity_below(m, site);
    m ^= bit;
    out.amp[static_cast<Eigen::Index>(dst.index(m1, m2))] += par ? -a : a;
  }
  return out;
}

}  // namespace

ManyBodyState apply_annihilation(const FockSpace& space, const ManyBodyState& s, int species,
                                 int site) {
  return apply_single<false>(space, s, species, site);
}

ManyBodyState apply_creation(const FockSpace& space, const ManyBodyState& s, int species, int site) {
  return apply_single<true>(space, s, species, site);
}

ManyBodyState apply_annihilation_mode(const FockSpace& space, const ManyBodyState& s, int species,
                                      const cplx* g) {
  if (species != 1 && species != 2) throw InvalidInput("species must be 1 or 2");
  ManyBodyState out =
      zero_state(space, s.ctx, s.N1 - (species == 1 ? 1 : 0), s.N2 - (species == 2 ? 1 : 0));
  if (!out.basis || !s.basis) return out;
  const auto& src = *s.basis;
  const auto& dst = *out.basis;
  const auto& sb_other = dst.species(species == 1 ? 2 : 1);
  const auto& sb_dst = dst.species(species);
  const std::size_t n2 = dst.species(2).size();
  for (std::size_t i = 0; i < src.dim(); ++i) {
    const cplx a = s.amp[static_cast<Eigen::Index>(i)];
    if (a == 0.0) continue;
    const std::uint64_t m1 = src.mask1(i), m2 = src.mask2(i);
    const std::uint64_t m = (species == 1) ? m1 : m2;
    const std::size_t other_rank = sb_other.rank(species == 1 ? m2 : m1);
    std::uint64_t rest = m;
    int below = 0;
    while (rest) {
      const int site = std::countr_zero(rest);
      rest &= rest - 1;
      const cplx c = std::conj(g[site]);
      if (c != 0.0) {
        const std::size_t r = sb_dst.rank(m ^ (std::uint64_t{1} << site));
        const std::size_t j = (species == 1) ? r * n2 + other_rank : other_rank * n2 + r;
        out.amp[static_cast<Eigen::Index>(j)] += (below & 1) ? -c * a : c * a;
      }
      ++below;
    }
  }
  return out;
}

ManyBodyState add_states(const ManyBodyState& a, const ManyBodyState& b, cplx cb) {
  if (a.N1 != b.N1 || a.N2 != b.N2) throw InvalidInput("adding vectors of different sectors");
  ManyBodyState out = a;
  if (!a.basis) return out;
  out.amp = a.amp + cb * b.amp;
  return out;
}

void SparseHamiltonian::apply(const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const {
  const std::size_t n = dim();
  y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    cplx acc = 0.0;
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) acc += val_[p] * x[col_[p]];
    y[static_cast<Eigen::Index>(r)] = acc;
  }
}

double SparseHamiltonian::entry(std::size_t r, std::size_t c) const {
  for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p)
    if (col_[p] == c) return val_[p];
  return 0.0;
}

double SparseHamiltonian::max_asymmetry() const {
  double worst = 0.0;
  for (std::size_t r = 0; r < dim(); ++r)
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p)
      worst = std::max(worst, std::abs(val_[p] - entry(col_[p], r)));
  return worst;
}

Eigen::MatrixXd SparseHamiltonian::dense() const {
  const auto n = static_cast<Eigen::Index>(dim());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t r = 0; r < dim(); ++r)
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p)
      m(static_cast<Eigen::Index>(r), col_[p]) += val_[p];
  return m;
}

bool SparseHamiltonian::is_zero() const {
  return std::all_of(val_.begin(), val_.end(), [](double v) { return v == 0.0; });
}

double lattice_pair_potential(const LatticeConfig& lat, const Potential& v, int a, int b) {
  if (v.is_zero()) return 0.0;
  int ca[3], cb[3];
  lat.coords(a, ca);
  lat.coords(b, cb);
  double x[3];
  for (int i = 0; i < lat.d; ++i) x[i] = min_image((ca[i] - cb[i]) * lat.dx, lat.length());
  return v.value(std::span<const double>(x, static_cast<std::size_t>(lat.d)));
}

Eigen::MatrixXd kinetic_matrix(const LatticeConfig& lat, double hbar) {
  const int K = lat.sites();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(K, K);
  const double hop = -hbar * hbar / (2.0 * lat.dx * lat.dx);
  int c[3];
  for (int s = 0; s < K; ++s) {
    h(s, s) += -2.0 * lat.d * hop;
    for (int a = 0; a < lat.d; ++a)
      for (int dir : {-1, 1}) {
        lat.coords(s, c);
        c[a] += dir;
        h(lat.flat(c), s) += hop;
      }
  }
  return h;
}

Eigen::MatrixXd spectral_kinetic_matrix(const LatticeConfig& lat, double hbar) {
  const int M = lat.M;
  // one axis: (1/M) sum_n (hbar^2 k_n^2 / 2) cos(k_n (x - y)), k_n wrapped to the zone
  Eigen::MatrixXd h1 = Eigen::MatrixXd::Zero(M, M);
  for (int x = 0; x < M; ++x)
    for (int y = 0; y < M; ++y) {
      double s = 0.0;
      for (int n = 0; n < M; ++n) {
        const int nn = n <= M / 2 ? n : n - M;
        const double k = 2.0 * kPi * nn / (M * lat.dx);
        s += 0.5 * hbar * hbar * k * k * std::cos(k * (x - y) * lat.dx);
      }
      h1(x, y) = s / M;
    }
  const int K = lat.sites();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(K, K);
  int cu[3], cw[3];
  for (int u = 0; u < K; ++u)
    for (int w = 0; w < K; ++w) {
      lat.coords(u, cu);
      lat.coords(w, cw);
      for (int a = 0; a < lat.d; ++a) {
        bool rest = true;
        for (int b = 0; b < lat.d; ++b)
          if (b != a && cu[b] != cw[b]) rest = false;
        if (rest) h(u, w) += h1(cu[a], cw[a]);
      }
    }
  return h;
}

SparseHamiltonian build_hamiltonian(const LatticeConfig& lat, const ScalingContext& ctx,
                                    const PotentialSet& pots, const TwoSpeciesBasis& basis,
                                    KineticScheme scheme) {
  const int K = lat.sites();
  const double hbar = ctx.hbar();
  const double invN = 1.0 / ctx.N();
  const bool spectral = scheme == KineticScheme::Spectral;
  const double hop = spectral ? 0.0 : -hbar * hbar / (2.0 * lat.dx * lat.dx);
  const double onsite = spectral ? 0.0 : hbar * hbar / (lat.dx * lat.dx) * lat.d;
  Eigen::MatrixXd hs;
  if (spectral) hs = spectral_kinetic_matrix(lat, hbar);

  std::vector<double> v11(K * K), v22(K * K), v12(K * K);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) {
      v11[a * K + b] = lattice_pair_potential(lat, pots.v11, a, b);
      v22[a * K + b] = lattice_pair_potential(lat, pots.v22, a, b);
      v12[a * K + b] = lattice_pair_potential(lat, pots.v12, a, b);
    }
  std::vector<std::vector<int>> nbr(K);
  int c[3];
  for (int s = 0; s < K; ++s)
    for (int a = 0; a < lat.d; ++a)
      for (int dir : {-1, 1}) {
        lat.coords(s, c);
        c[a] += dir;
        nbr[s].push_back(lat.flat(c));
      }

  SparseHamiltonian H;
  const std::size_t n = basis.dim();
  H.row_ptr_.reserve(n + 1);
  H.row_ptr_.push_back(0);
  const auto& sb1 = basis.species(1);
  const auto& sb2 = basis.species(2);
  const std::size_t n2 = sb2.size();
  std::vector<std::pair<std::uint32_t, double>> row;
  std::vector<int> occ1, occ2;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    const std::uint64_t m1 = basis.mask1(i), m2 = basis.mask2(i);
    const std::size_t r1 = i / n2, r2 = i % n2;
    occ1.clear();
    occ2.clear();
    for (std::uint64_t t = m1; t; t &= t - 1) occ1.push_back(std::countr_zero(t));
    for (std::uint64_t t = m2; t; t &= t - 1) occ2.push_back(std::countr_zero(t));

    double diag = onsite * static_cast<double>(occ1.size() + occ2.size());
    if (spectral) {
      for (int a : occ1) diag += hs(a, a);
      for (int a : occ2) diag += hs(a, a);
    }
    double inter = 0.0;
    for (std::size_t p = 0; p < occ1.size(); ++p)
      for (std::size_t q = p + 1; q < occ1.size(); ++q) inter += v11[occ1[p] * K + occ1[q]];
    for (std::size_t p = 0; p < occ2.size(); ++p)
      for (std::size_t q = p + 1; q < occ2.size(); ++q) inter += v22[occ2[p] * K + occ2[q]];
    for (int a : occ1)
      for (int b : occ2) inter += v12[a * K + b];
    diag += invN * inter;
    if (diag != 0.0) row.emplace_back(static_cast<std::uint32_t>(i), diag);

    if (hop != 0.0) {
      for (int s : occ1)
        for (int t : nbr[s]) {
          if (m1 & (std::uint64_t{1} << t)) continue;
          const std::uint64_t nm = m1 ^ (std::uint64_t{1} << s) ^ (std::uint64_t{1} << t);
          const double sign = parity_between(m1, s, t) ? -1.0 : 1.0;
          row.emplace_back(static_cast<std::uint32_t>(sb1.rank(nm) * n2 + r2), hop * sign);
        }
      for (int s : occ2)
        for (int t : nbr[s]) {
          if (m2 & (std::uint64_t{1} << t)) continue;
          const std::uint64_t nm = m2 ^ (std::uint64_t{1} << s) ^ (std::uint64_t{1} << t);
          const double sign = parity_between(m2, s, t) ? -1.0 : 1.0;
          row.emplace_back(static_cast<std::uint32_t>(r1 * n2 + sb2.rank(nm)), hop * sign);
        }
    }
    if (spectral) {
      for (int s : occ1)
        for (int t = 0; t < K; ++t) {
          if ((m1 & (std::uint64_t{1} << t)) || hs(t, s) == 0.0) continue;
          const std::uint64_t nm = m1 ^ (std::uint64_t{1} << s) ^ (std::uint64_t{1} << t);
          const double sign = parity_between(m1, s, t) ? -1.0 : 1.0;
          row.emplace_back(static_cast<std::uint32_t>(sb1.rank(nm) * n2 + r2), hs(t, s) * sign);
        }
      for (int s : occ2)
        for (int t = 0; t < K; ++t) {
          if ((m2 & (std::uint64_t{1} << t)) || hs(t, s) == 0.0) continue;
          const std::uint64_t nm = m2 ^ (std::uint64_t{1} << s) ^ (std::uint64_t{1} << t);
          const double sign = parity_between(m2, s, t) ? -1.0 : 1.0;
          row.emplace_back(static_cast<std::uint32_t>(r1 * n2 + sb2.rank(nm)), hs(t, s) * sign);
        }
    }
    std::sort(row.begin(), row.end());
    for (std::size_t p = 0; p < row.size(); ++p) {
      if (!H.col_.empty() && H.row_ptr_.back() < H.col_.size() && H.col_.back() == row[p].first) {
        H.val_.back() += row[p].second;
        continue;
      }
      H.col_.push_back(row[p].first);
      H.val_.push_back(row[p].second);
    }
    H.row_ptr_.push_back(H.col_.size());
  }
  return H;
}

namespace {

Eigen::MatrixXcd orbital_matrix(const std::vector<CplxVec>& orbitals, int K) {
  const int n = static_cast<int>(orbitals.size());
  Eigen::MatrixXcd E(K, n);
  for (int a = 0; a < n; ++a) {
    if (static_cast<int>(orbitals[a].size()) != K)
      throw InvalidInput("orbital length differs from the number of lattice sites");
    for (int j = 0; j < K; ++j) E(j, a) = orbitals[a][j];
  }
  if (n == 0) return E;
  const Eigen::MatrixXcd G = E.adjoint() * E;
  const double dev = (G - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
  if (dev <= 1e-8) return E;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || lmin < 1e-10 * lmax)
    throw DegenerateOrbitals("orbital Gram matrix is rank deficient");
  // Loewdin orthonormalisation
  Eigen::VectorXd isq = es.eigenvalues().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXcd S = es.eigenvectors() * isq.asDiagonal() * es.eigenvectors().adjoint();
  return E * S;
}

// Determinant of the orbitals restricted to the occupied sites of each mask.
Eigen::VectorXcd determinants(const Eigen::MatrixXcd& E, const SpeciesBasis& sb) {
  const int n = static_cast<int>(E.cols());
  Eigen::VectorXcd out(static_cast<Eigen::Index>(sb.size()));
  Eigen::MatrixXcd sub(n, n);
  for (std::size_t i = 0; i < sb.size(); ++i) {
    if (n == 0) {
      out[static_cast<Eigen::Index>(i)] = 1.0;
      continue;
    }
    int r = 0;
    for (std::uint64_t t = sb.mask(i); t; t &= t - 1, ++r) sub.row(r) = E.row(std::countr_zero(t));
    out[static_cast<Eigen::Index>(i)] = sub.transpose().determinant();
  }
  return out;
}

}  // namespace

ManyBodyState slater_initial_state(const FockSpace& space, const ScalingContext& ctx,
                                   const std::vector<CplxVec>& orbitals1,
                                   const std::vector<CplxVec>& orbitals2) {
  if (static_cast<int>(orbitals1.size()) != ctx.N1 || static_cast<int>(orbitals2.size()) != ctx.N2)
    throw InvalidInput("number of orbitals differs from the particle numbers");
  const int K = space.sites();
  const Eigen::MatrixXcd E1 = orbital_matrix(orbitals1, K);
  const Eigen::MatrixXcd E2 = orbital_matrix(orbitals2, K);
  ManyBodyState s = zero_state(space, ctx, ctx.N1, ctx.N2);
  const Eigen::VectorXcd d1 = determinants(E1, s.basis->species(1));
  const Eigen::VectorXcd d2 = determinants(E2, s.basis->species(2));
  const std::size_t n2 = s.basis->species(2).size();
  for (Eigen::Index i = 0; i < s.amp.size(); ++i)
    s.amp[i] = d1[static_cast<Eigen::Index>(i / n2)] * d2[static_cast<Eigen::Index>(i % n2)];
  const double nrm = s.amp.norm();
  if (!(nrm > 0.0)) throw DegenerateOrbitals("Slater determinant vanishes");
  s.amp /= nrm;
  return s;
}

CplxVec gaussian_packet(const LatticeConfig& lat, double q0, double sigma, double p0, double hbar) {
  if (lat.d != 1) throw InvalidInput("gaussian packets are built for d = 1");
  if (!(sigma > 0.0)) throw InvalidInput("packet width must be positive");
  CplxVec v(lat.M);
  double n = 0.0;
  for (int j = 0; j < lat.M; ++j) {
    const double x = min_image(lat.position(j) - q0, lat.length());
    v[j] = std::exp(-x * x / (4 * sigma * sigma)) * std::polar(1.0, p0 * x / hbar);
    n += std::norm(v[j]);
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

namespace {

// One Lanczos exponential exp(-i tau H) v. Returns false when the tolerance is
// not met inside the maximal subspace; v is modified only on success.
bool lanczos_expm(const SparseHamiltonian& H, Eigen::VectorXcd& v, double tau,
                  const EvolveOptions& opt, EvolveStats* stats, double* err_out) {
  const double beta0 = v.norm();
  if (beta0 == 0.0 || tau == 0.0) return true;
  std::vector<Eigen::VectorXcd> V;
  V.push_back(v / beta0);
  std::vector<double> alpha, beta;
  Eigen::VectorXcd w;
  double err = 0.0;
  for (int j = 0; j < opt.max_krylov; ++j) {
    H.apply(V[j], w);
    const double a = V[j].dot(w).real();
    w -= a * V[j];
    if (j > 0) w -= beta[j - 1] * V[j - 1];
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) w -= V[i].dot(w) * V[i];
    const double b = w.norm();
    alpha.push_back(a);
    const int m = j + 1;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const Eigen::MatrixXd& Q = es.eigenvectors();
    Eigen::VectorXcd ph(m);
    for (int i = 0; i < m; ++i) ph[i] = std::exp(cplx(0.0, -tau * es.eigenvalues()[i])) * Q(0, i);
    const Eigen::VectorXcd y = Q.cast<cplx>() * ph;
    const double scale = std::max(1.0, T.cwiseAbs().maxCoeff());
    const bool breakdown = b <= 1e-13 * scale;
    err = breakdown ? 0.0 : b * std::abs(y[m - 1]) * beta0;
    if (err <= opt.tol || breakdown) {
      Eigen::VectorXcd out = Eigen::VectorXcd::Zero(v.size());
      for (int i = 0; i < m; ++i) out += y[i] * V[i];
      v = beta0 * out;
      if (stats) {
        stats->max_subspace = std::max(stats->max_subspace, m);
        stats->worst_error = std::max(stats->worst_error, err);
        ++stats->substeps;
      }
      return true;
    }
    beta.push_back(b);
    V.push_back(w / b);
  }
  if (err_out) *err_out = err;
  return false;
}

void advance(const SparseHamiltonian& H, Eigen::VectorXcd& v, double tau, int depth,
             const EvolveOptions& opt, EvolveStats* stats) {
  double err = 0.0;
  if (lanczos_expm(H, v, tau, opt, stats, &err)) return;
  if (depth >= opt.max_split) {
    std::ostringstream os;
    os << "local error " << err << " above tolerance " << opt.tol << " at subspace size "
       << opt.max_krylov;
    throw KrylovStagnation(os.str());
  }
  advance(H, v, 0.5 * tau, depth + 1, opt, stats);
  advance(H, v, 0.5 * tau, depth + 1, opt, stats);
}

}  // namespace

ManyBodyState evolve(const ManyBodyState& s, const SparseHamiltonian& H, double t_final, int steps,
                     const EvolveOptions& opt, EvolveStats* stats) {
  if (steps < 1) throw InvalidInput("evolve needs at least one step");
  if (!s.basis) return s;
  if (H.dim() != s.basis->dim()) throw InvalidInput("Hamiltonian and state dimensions differ");
  ManyBodyState out = s;
  if (t_final == 0.0 || H.is_zero()) return out;
  const double tau = t_final / steps / s.ctx.hbar();
  for (int k = 0; k < steps; ++k) advance(H, out.amp, tau, 0, opt, stats);
  return out;
}

double expect_energy(const ManyBodyState& s, const SparseHamiltonian& H) {
  Eigen::VectorXcd y;
  H.apply(s.amp, y);
  return s.amp.dot(y).real() / s.amp.squaredNorm();
}

cplx ReducedDensityMatrix::trace() const {
  return kernel.trace() * std::pow(cell, order());
}

namespace {

// Columns are b_{u~l} .. b_{u~1} a_{uk} .. a_{u1} Psi over all index tuples,
// the first coordinate most significant.
Eigen::MatrixXcd annihilated_columns(const FockSpace& space, const ManyBodyState& s, int k, int l,
                                     int* out_N1, int* out_N2) {
  const int K = space.sites();
  std::vector<ManyBodyState> cur{s};
  for (int slot = 0; slot < k + l; ++slot) {
    const int species = slot < k ? 1 : 2;
    std::vector<ManyBodyState> next;
    next.reserve(cur.size() * K);
    for (const auto& v : cur)
      for (int u = 0; u < K; ++u) next.push_back(apply_annihilation(space, v, species, u));
    cur.swap(next);
  }
  *out_N1 = s.N1 - k;
  *out_N2 = s.N2 - l;
  const auto basis = space.sector(*out_N1, *out_N2);
  const Eigen::Index rows = basis ? static_cast<Eigen::Index>(basis->dim()) : 0;
  Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(rows, static_cast<Eigen::Index>(cur.size()));
  for (std::size_t c = 0; c < cur.size(); ++c)
    if (rows > 0) P.col(static_cast<Eigen::Index>(c)) = cur[c].amp;
  return P;
}

}  // namespace

ReducedDensityMatrix reduced_density(const FockSpace& space, const ManyBodyState& s, int k, int l) {
  if (k < 0 || l < 0 || (k == 0 && l == 0)) throw InvalidInput("order (k,l) must be non-trivial");
  if (k + l > 3) throw OrderTooHigh("reduced densities are capped at k+l <= 3");
  if (k > s.N1 || l > s.N2) throw OrderTooHigh("order exceeds the particle numbers of the state");
  const int K = space.sites();
  double ncols = 1.0;
  for (int i = 0; i < k + l; ++i) ncols *= K;
  const auto target = space.sector(s.N1 - k, s.N2 - l);
  const double rows = target ? static_cast<double>(target->dim()) : 0.0;
  if (rows * ncols > 6e7 || ncols * ncols > 6e7)
    throw CapacityExceeded("reduced density kernel too large for this lattice");
  int r1 = 0, r2 = 0;
  const Eigen::MatrixXcd P = annihilated_columns(space, s, k, l, &r1, &r2);
  ReducedDensityMatrix g;
  g.k = k;
  g.l = l;
  g.sites = K;
  g.cell = space.lattice().cell_volume();
  g.ctx = s.ctx;
  const double scale = std::pow(g.cell, -(k + l)) / s.amp.squaredNorm();
  // kernel(U, W) = <phi_W, phi_U>
  g.kernel = (P.transpose() * P.conjugate()) * scale;
  return g;
}

Eigen::MatrixXcd one_body_density(const FockSpace& space, const ManyBodyState& s, int species) {
  const int K = space.sites();
  const auto target = space.sector(s.N1 - (species == 1), s.N2 - (species == 2));
  if (!target) return Eigen::MatrixXcd::Zero(K, K);
  Eigen::MatrixXcd P(static_cast<Eigen::Index>(target->dim()), K);
  for (int u = 0; u < K; ++u) P.col(u) = apply_annihilation(space, s, species, u).amp;
  return (P.transpose() * P.conjugate()) / s.amp.squaredNorm();
}

ManyBodyState apply_number(const ManyBodyState& s, int species) {
  ManyBodyState out = s;
  if (!s.basis) return out;
  for (std::size_t i = 0; i < s.basis->dim(); ++i) {
    const std::uint64_t m = species == 1 ? s.basis->mask1(i) : s.basis->mask2(i);
    out.amp[static_cast<Eigen::Index>(i)] *= static_cast<double>(std::popcount(m));
  }
  return out;
}

namespace {

// Re<a, b> and <a, a> accumulated in one fixed order.
double ratio_expectation(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    num += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    den += a[i].real() * a[i].real() + a[i].imag() * a[i].imag();
  }
  return num / den;
}

}  // namespace

double expect_number(const ManyBodyState& s, int species) {
  if (!s.basis) return 0.0;
  // weight per occupation count; a fixed-number state has a single class
  std::vector<double> w(65, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < s.basis->dim(); ++i) {
    const std::uint64_t m = species == 1 ? s.basis->mask1(i) : s.basis->mask2(i);
    const double a = std::norm(s.amp[static_cast<Eigen::Index>(i)]);
    w[std::popcount(m)] += a;
    total += a;
  }
  double e = 0.0;
  for (int c = 0; c <= 64; ++c)
    if (w[c] != 0.0) e += c * (w[c] / total);
  return e;
}

double expect_number_moments(const ManyBodyState& s, int k, int l) {
  if ((k > 0 && s.N1 == 0) || (l > 0 && s.N2 == 0))
    throw InvalidInput("moment of an empty species is undefined");
  ManyBodyState cur = s;
  for (int i = 0; i < k; ++i) {
    cur = apply_number(cur, 1);
    cur.amp /= static_cast<double>(s.N1);
  }
  for (int i = 0; i < l; ++i) {
    cur = apply_number(cur, 2);
    cur.amp /= static_cast<double>(s.N2);
  }
  return ratio_expectation(s.amp, cur.amp);
}

double expect_kinetic(const FockSpace& space, const ManyBodyState& s, int species) {
  const Eigen::MatrixXd h = kinetic_matrix(space.lattice(), s.ctx.hbar());
  const Eigen::MatrixXcd D = one_body_density(space, s, species);
  return (h.cast<cplx>() * D).trace().real();
}

double expect_kinetic_spectral(const FockSpace& space, const ManyBodyState& s, int species) {
  const Eigen::MatrixXd h = spectral_kinetic_matrix(space.lattice(), s.ctx.hbar());
  const Eigen::MatrixXcd D = one_body_density(space, s, species);
  return (h.cast<cplx>() * D).trace().real();
}

}  // namespace v2s
