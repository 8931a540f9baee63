#pragma once

#include <string>
#include <vector>

#include "v2s/common.hpp"
#include "v2s/fock.hpp"

namespace v2s {

enum class ProfileKind { CosineBump, TruncatedGaussian };

std::string to_string(ProfileKind k);
ProfileKind profile_kind_from_string(const std::string& s);

/// Uniform periodic-style phase grid shared by all particle slots.
/// q_i = q0 + i dq (i < nq), p_j = p0 + j dp (j < np), per axis; d axes each.
struct PhaseGrid {
  int d = 1;
  int nq = 0;
  double q0 = 0.0;
  double dq = 1.0;
  int np = 0;
  double p0 = 0.0;
  double dp = 1.0;
  int q_stride = 1;  // lattice sites per q step on quantum grids
  bool p_periodic = false;  // p axis spans one full Brillouin zone

  std::size_t q_points() const;
  std::size_t p_points() const;
  std::size_t points() const { return q_points() * p_points(); }
  // phase point z = iq * p_points() + ip, iq and ip flattened with axis 0 fastest
  double q(std::size_t z, int axis = 0) const;
  double p(std::size_t z, int axis = 0) const;
  std::size_t iq(std::size_t z) const { return z / p_points(); }
  std::size_t ip(std::size_t z) const { return z % p_points(); }
  double weight() const;  // dq^d dp^d
  double q_length() const { return nq * dq; }
  double p_max() const { return std::max(std::abs(p0), std::abs(p0 + (np - 1) * dp)); }
  void validate() const;
};

// Quantum grid: q on lattice positions (every `stride`-th site), p covering
// [-pi hbar/dx, pi hbar/dx) with n_p points. Passing p_max > 0 selects the
// range [-p_max, p_max) instead.
PhaseGrid husimi_grid(const LatticeConfig& lat, double hbar, int n_p = 0, double p_max = 0.0,
                      int stride = 1);

// Cell-centred grid for the kinetic solver on [-L/2, L/2) x [-p_max, p_max).
PhaseGrid vlasov_grid(double L, int nq, double p_max, int np);

/// Coherent states f^hbar_{q,p}(y) = hbar^(-d/4) f((y - q)/sqrt(hbar)) e^{i p y / hbar}
/// on a periodic lattice, with y - q taken as the minimum image.
class CoherentFamily {
 public:
  CoherentFamily(const LatticeConfig& lat, double hbar, ProfileKind kind = ProfileKind::CosineBump,
                 double R1 = 1.0);

  const LatticeConfig& lattice() const { return lat_; }
  double hbar() const { return hbar_; }
  double R1() const { return R1_; }
  ProfileKind kind() const { return kind_; }

  // Profile value and gradient at a scaled displacement r = (y - q)/sqrt(hbar).
  double profile(const double* r) const;
  void profile_grad(const double* r, double* out) const;
  // int |grad f|^2 (continuum, by fine quadrature of the analytic profile)
  double grad_norm2() const { return grad_norm2_; }
  // Lattice norm of the sampled profile before normalisation (diagnostic).
  double lattice_normalisation() const { return norm_const_; }
  // Window diameter in lattice sites along one axis.
  int window_diameter_sites() const;

  // Continuum-normalised coherent state at every lattice site.
  CplxVec coherent_state(const double* q, const double* p) const;
  // Lattice-normalised values sqrt(dx^d) f^hbar at the window sites; grad
  // holds d/dq_a of the same vector (axis-major, d blocks) when requested.
  struct Window {
    std::vector<int> sites;
    CplxVec g;
    CplxVec dg;  // size d * sites.size()
  };
  Window window(const double* q, const double* p, bool with_grad = false) const;
  // Dense lattice-normalised vector (size sites).
  CplxVec lattice_vector(const double* q, const double* p) const;

 private:
  LatticeConfig lat_;
  double hbar_;
  ProfileKind kind_;
  double R1_;
  double norm_const_ = 1.0;
  double grad_norm2_ = 0.0;
};

/// Grid function m^(k,l) on (k+l) copies of a phase grid, slot order
/// species-1 slots then species-2 slots, first slot most significant.
struct HusimiMeasure {
  int k = 0;
  int l = 0;
  PhaseGrid grid;
  ScalingContext ctx;
  RealVec values;

  int order() const { return k + l; }
  std::size_t size() const { return values.size(); }
  double integral() const;  // plain sum times weight^(k+l)
};

HusimiMeasure husimi_transform(const ReducedDensityMatrix& gamma, const CoherentFamily& fam,
                               const PhaseGrid& grid);

// m^(k,l)(Z) = || prod b(f_z~) prod a(f_z) Psi ||^2 evaluated directly on the state.
HusimiMeasure husimi_from_state(const FockSpace& space, const ManyBodyState& s,
                                const CoherentFamily& fam, const PhaseGrid& grid, int k, int l);

struct PropertyReport {
  double symmetry_dev = 0.0;
  double min_value = 0.0;
  double max_value = 0.0;
  bool passive = true;  // min >= -1e-9 and max <= 1 + eps_disc
  double l1_value = 0.0;
  double l1_expected = 0.0;
  double l1_rel_err = 0.0;
  bool has_recursion1 = false;
  bool has_recursion2 = false;
  double recursion1_dev = 0.0;  // max pointwise deviation relative to the peak of the target
  double recursion2_dev = 0.0;
};

inline constexpr double kDiscretizationSlack = 1e-6;

PropertyReport check_marginal_properties(const HusimiMeasure& m, const ScalingContext& ctx,
                             const HusimiMeasure* lower_species1 = nullptr,
                             const HusimiMeasure* lower_species2 = nullptr);

// (2 pi)^-d integral over one slot; the result has that slot removed.
HusimiMeasure marginalize_slot(const HusimiMeasure& m, int slot);

struct IdentityReport {
  double lhs = 0.0;           // <Psi, K_alpha/N Psi>, continuum (spectral) kinetic energy
  double lhs_stencil = 0.0;   // same with the central-difference kinetic operator
  double p2_moment = 0.0;     // (2 pi)^-d int |p|^2 m
  double window_term = 0.0;   // n_alpha hbar int |grad f|^2
  double rhs = 0.0;           // (p2_moment - window_term) / 2
  double abs_gap = 0.0;
  double rel_gap = 0.0;
  double rel_gap_stencil = 0.0;
};

IdentityReport kinetic_identity(const FockSpace& space, const ManyBodyState& s,
                                const HusimiMeasure& m_single, const CoherentFamily& fam,
                                int species = 1);

struct MomentReport {
  std::vector<double> times;
  std::vector<double> moments;  // int (|q| + |p|^2 per slot) m
  double envelope_C = 0.0;      // max of moment / (1 + t^3) over the first half of the times
  bool exceeds = false;         // some moment above 2 C (1 + t^3)
};

double phase_moment_q_p2(const HusimiMeasure& m);
MomentReport moment_bounds(const std::vector<HusimiMeasure>& traj, const std::vector<double>& times);

}  // namespace v2s
