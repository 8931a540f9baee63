#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "v2s/common.hpp"
#include "v2s/potentials.hpp"

namespace v2s {

inline constexpr std::size_t kDefaultBasisCap = 5'000'000;

/// All occupation bitsets of `sites` modes with `count` bits set, in increasing
/// integer order of the mask. Rank lookup uses the combinatorial number system.
class SpeciesBasis {
 public:
  SpeciesBasis(int sites, int count);
  std::size_t size() const { return masks_.size(); }
  std::uint64_t mask(std::size_t i) const { return masks_[i]; }
  std::size_t rank(std::uint64_t mask) const;
  int sites() const { return sites_; }
  int count() const { return count_; }

 private:
  int sites_;
  int count_;
  std::vector<std::uint64_t> masks_;
};

std::uint64_t binomial(int n, int k);

/// Fixed (N1, N2) sector; index = i1 * size2 + i2.
class TwoSpeciesBasis {
 public:
  TwoSpeciesBasis(int sites, int N1, int N2);
  std::size_t dim() const { return b1_.size() * b2_.size(); }
  int sites() const { return b1_.sites(); }
  int N1() const { return b1_.count(); }
  int N2() const { return b2_.count(); }
  const SpeciesBasis& species(int alpha) const { return alpha == 1 ? b1_ : b2_; }
  std::uint64_t mask1(std::size_t i) const { return b1_.mask(i / b2_.size()); }
  std::uint64_t mask2(std::size_t i) const { return b2_.mask(i % b2_.size()); }
  std::size_t index(std::uint64_t m1, std::uint64_t m2) const {
    return b1_.rank(m1) * b2_.size() + b2_.rank(m2);
  }

 private:
  SpeciesBasis b1_;
  SpeciesBasis b2_;
};

std::shared_ptr<const TwoSpeciesBasis> build_basis(const LatticeConfig& lattice,
                                                   const ScalingContext& ctx,
                                                   std::size_t cap = kDefaultBasisCap);

/// Lattice plus a cache of particle-number sectors reached by creation and
/// annihilation. Thread-safe.
class FockSpace {
 public:
  explicit FockSpace(LatticeConfig lattice, std::size_t cap = kDefaultBasisCap);
  const LatticeConfig& lattice() const { return lattice_; }
  int sites() const { return lattice_.sites(); }
  // nullptr when the sector is empty (negative count or more particles than sites).
  std::shared_ptr<const TwoSpeciesBasis> sector(int N1, int N2) const;

 private:
  LatticeConfig lattice_;
  std::size_t cap_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const TwoSpeciesBasis>> cache_;
};

/// Complex amplitudes over an (N1, N2) sector. A null basis denotes the zero
/// vector of an empty sector.
struct ManyBodyState {
  std::shared_ptr<const TwoSpeciesBasis> basis;
  Eigen::VectorXcd amp;
  ScalingContext ctx;  // the physical system; hbar is taken from here
  int N1 = 0;          // sector of this vector
  int N2 = 0;

  bool is_zero() const { return !basis || amp.size() == 0 || amp.squaredNorm() == 0.0; }
  double norm() const { return basis ? amp.norm() : 0.0; }
  bool normalized(double tol = 1e-10) const { return std::abs(norm() - 1.0) <= tol; }
};

ManyBodyState zero_state(const FockSpace& space, const ScalingContext& ctx, int N1, int N2);
ManyBodyState random_state(const FockSpace& space, const ScalingContext& ctx, std::uint64_t seed);

// Single-mode operators. species in {1, 2}; site is a flat lattice index.
ManyBodyState apply_annihilation(const FockSpace& space, const ManyBodyState& s, int species,
                                 int site);
ManyBodyState apply_creation(const FockSpace& space, const ManyBodyState& s, int species,
                             int site);
// a(g) = sum_j conj(g_j) a_j with g a lattice-normalised mode vector.
ManyBodyState apply_annihilation_mode(const FockSpace& space, const ManyBodyState& s,
                                      int species, const cplx* g);
// Sum of two vectors of the same sector (either may be an empty-sector zero).
ManyBodyState add_states(const ManyBodyState& a, const ManyBodyState& b, cplx cb = 1.0);

/// Real symmetric sparse matrix in CSR form with complex vector products.
class SparseHamiltonian {
 public:
  std::size_t dim() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  void apply(const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const;
  double entry(std::size_t r, std::size_t c) const;
  std::size_t nonzeros() const { return val_.size(); }
  double max_asymmetry() const;
  Eigen::MatrixXd dense() const;
  bool is_zero() const;

  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
};

// Pair energy of two sites under minimum-image separation.
double lattice_pair_potential(const LatticeConfig& lat, const Potential& v, int a, int b);

// CentralDifference is the default lattice Laplacian. Spectral uses the Fourier
// symbol of spectral_kinetic_matrix (dense hopping).
enum class KineticScheme { CentralDifference, Spectral };

SparseHamiltonian build_hamiltonian(const LatticeConfig& lattice, const ScalingContext& ctx,
                                    const PotentialSet& pots, const TwoSpeciesBasis& basis,
                                    KineticScheme scheme = KineticScheme::CentralDifference);

// One-particle kinetic matrix -(hbar^2/2) Laplacian on the periodic lattice.
Eigen::MatrixXd kinetic_matrix(const LatticeConfig& lattice, double hbar);

// Fourier-symbol kinetic matrix (hbar^2 |k|^2 / 2 on the lattice wavenumbers, wrapped to
// the Brillouin zone; the Nyquist mode uses (pi/dx)^2). This is the continuum kinetic
// energy of the trigonometric interpolant of a lattice orbital.
Eigen::MatrixXd spectral_kinetic_matrix(const LatticeConfig& lattice, double hbar);

/// Product of two Slater determinants. Orbitals are lattice vectors with unit
/// l2 norm (amplitudes of one-particle lattice states).
ManyBodyState slater_initial_state(const FockSpace& space, const ScalingContext& ctx,
                                   const std::vector<CplxVec>& orbitals1,
                                   const std::vector<CplxVec>& orbitals2);

// Lattice-normalised gaussian packet, |psi|^2 of standard deviation sigma around q0
// (minimum image), carrying momentum p0.
CplxVec gaussian_packet(const LatticeConfig& lat, double q0, double sigma, double p0, double hbar);

struct EvolveOptions {
  double tol = 1e-10;
  int max_krylov = 60;
  int max_split = 12;
};

struct EvolveStats {
  int substeps = 0;
  int max_subspace = 0;
  double worst_error = 0.0;
};

/// Psi_t = exp(-i H t / hbar) Psi, Lanczos exponential per step.
ManyBodyState evolve(const ManyBodyState& s, const SparseHamiltonian& H, double t_final,
                     int steps, const EvolveOptions& opt = {}, EvolveStats* stats = nullptr);

double expect_energy(const ManyBodyState& s, const SparseHamiltonian& H);

/// gamma^(k,l)(u; w) on (k+l) lattice coordinates, flattened with the first
/// coordinate most significant. Values carry the continuum normalisation
/// (division by the cell volume per coordinate).
struct ReducedDensityMatrix {
  int k = 0;
  int l = 0;
  int sites = 0;
  double cell = 1.0;  // dx^d
  Eigen::MatrixXcd kernel;  // rows u, columns w
  ScalingContext ctx;

  int order() const { return k + l; }
  std::size_t side() const { return static_cast<std::size_t>(kernel.rows()); }
  cplx operator()(std::size_t u, std::size_t w) const { return kernel(u, w); }
  cplx trace() const;  // lattice sum times cell^(k+l)
};

ReducedDensityMatrix reduced_density(const FockSpace& space, const ManyBodyState& s, int k, int l);

// D(u, w) = <a*_w a_u>, lattice normalised (gamma^(1,0) = D / dx^d).
Eigen::MatrixXcd one_body_density(const FockSpace& space, const ManyBodyState& s, int species);

ManyBodyState apply_number(const ManyBodyState& s, int species);
double expect_number(const ManyBodyState& s, int species);
double expect_number_moments(const ManyBodyState& s, int k, int l);
double expect_kinetic(const FockSpace& space, const ManyBodyState& s, int species);
double expect_kinetic_spectral(const FockSpace& space, const ManyBodyState& s, int species);

}  // namespace v2s
