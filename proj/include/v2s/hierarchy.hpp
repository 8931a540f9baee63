#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "v2s/coherent_husimi.hpp"
#include "v2s/fock.hpp"
#include "v2s/potentials.hpp"
#include "v2s/vlasov.hpp"

namespace v2s {

inline constexpr int kFamilyHardCap = 3;

/// Truncated family m^(k,l), k + l <= max_order, on one grid.
struct HusimiFamily {
  PhaseGrid grid;
  ScalingContext ctx;
  int max_order = 2;
  std::map<std::pair<int, int>, HusimiMeasure> levels;

  bool has(int k, int l) const { return levels.count({k, l}) > 0; }
  const HusimiMeasure& at(int k, int l) const;  // MissingLevel when absent
  void insert(HusimiMeasure m);
  // Largest recursion deviation between adjacent levels (relative to the peak).
  double recursion_deviation() const;
};

HusimiFamily husimi_family(const FockSpace& space, const ManyBodyState& s, const CoherentFamily& fam,
                           const PhaseGrid& grid, int max_order = 2);

// Grid derivative of a multi-slot grid function along q or p of one slot.
// q is periodic and differentiated spectrally; p spectrally on a full zone,
// otherwise with sixth-order differences and zero values outside.
RealVec slot_derivative(const RealVec& values, const PhaseGrid& grid, int slots, int slot, bool along_p);

// (2 pi)^-d sum_z' w grad V(q_s - q') m^(k+1,l)(Z, z') with the new slot in
// species `extra`; slot_species tells which potential applies.
RealVec collision_flux(const HusimiFamily& fam, int k, int l, int slot, int extra,
                       const PotentialSet& pots);

struct HierarchyRhs {
  RealVec transport;  // - sum_s p_s d/dq_s m^(k,l)
  RealVec collision;  // sum of the four collision integrals
  RealVec total() const;
};

HierarchyRhs vlasov_hierarchy_rhs(const HusimiFamily& fam, int k, int l, const PotentialSet& pots);

struct FactorizedResidual {
  double residual = 0.0;  // ||res||_1 / ||rhs||_1
  double residual_l1 = 0.0;
  double rhs_l1 = 0.0;
  double dt_l1 = 0.0;
};

// m1^k (x) m2^l against the limit hierarchy; time derivative by central
// differences between `minus` and `plus`, which bracket `mid` by +-dt_probe.
FactorizedResidual factorized_residual(const SpeciesPairDistribution& minus,
                                       const SpeciesPairDistribution& mid,
                                       const SpeciesPairDistribution& plus, double dt_probe,
                                       const PotentialSet& pots, int k, int l);

// One Strang step each way around `mid`.
FactorizedResidual factorized_residual(const SpeciesPairDistribution& mid, const PotentialSet& pots,
                                       int k, int l, double dt_probe);

// ---- weak pairing ----

enum class Divergence { None, Q, P };

/// A hierarchy term on the (k+l)-slot grid. Divergence terms enter as
/// d/dq_slot or d/dp_slot of `values`.
struct Term {
  std::string name;
  int slot = -1;
  Divergence div = Divergence::None;
  RealVec values;
};

/// 8 separable test functions per slot pattern: q modes cos, sin of 2 pi q/L and
/// 4 pi q/L times p modes cos, sin of 2 pi p/P, P the p extent of the grid.
struct TestBattery {
  static constexpr int kSize = 8;
  static double value(int b, double q, double p, double L, double P);
  static double dq(int b, double q, double p, double L, double P);
  static double dp(int b, double q, double p, double L, double P);
};

// (2 pi)^-n w^n sum_Z phi_b(Z) T(Z), divergence moved onto phi.
double weak_pairing(const Term& t, const PhaseGrid& grid, int slots, int b);

struct RemainderNorm {
  std::string name;
  double weak = 0.0;  // max over the battery of |pairing|
  double l1 = 0.0;    // (2 pi)^-n int |R|
};

struct RemainderReport {
  int k = 0;
  int l = 0;
  int N = 0;
  double hbar = 0.0;
  HusimiMeasure m;                 // m^(k,l) at the same time
  std::vector<Term> collisions;    // main terms, from the fast resolution formula
  std::vector<Term> remainders;    // R1, R2, Rt11, Rt12_1, Rt12_2, Rt22 per slot, Rh11, Rh12, Rh22
  std::vector<RemainderNorm> norms;  // one per remainder name, slots combined

  const RemainderNorm& norm(const std::string& name) const;
};

// Remainder terms at (k, l) with k + l <= 2, evaluated by contracting
// coherent windows against Psi. Requires the full lattice q-grid and the
// full-zone p-grid, d = 1.
RemainderReport quantum_remainders(const FockSpace& space, const ManyBodyState& s,
                                   const CoherentFamily& fam, const PhaseGrid& grid, int k, int l,
                                   const PotentialSet& pots);

struct ConsistencyReport {
  double gap = 0.0;                 // with remainders
  double gap_without = 0.0;         // remainders omitted
  double scale = 0.0;               // max over the battery of the summed |pairings|
  double remainder_weak = 0.0;      // max over the battery of |sum of remainder pairings|
  std::vector<std::vector<double>> pairings;  // [battery][term]
  std::vector<std::string> names;
};

// Weak-form check of the finite-N hierarchy at (k, l): states at t - h, t, t + h.
// Collisions are taken from m^(k+1,l) and m^(k,l+1) computed on the grid.
ConsistencyReport bbgky_consistency(const FockSpace& space, const ManyBodyState& minus,
                                    const ManyBodyState& mid, const ManyBodyState& plus, double h,
                                    const CoherentFamily& fam, const PhaseGrid& grid, int k, int l,
                                    const PotentialSet& pots);

// Swap species labels of a state: amplitudes transposed, N1 <-> N2.
ManyBodyState swap_species(const FockSpace& space, const ManyBodyState& s);

}  // namespace v2s
