#pragma once

#include <functional>
#include <vector>

#include "v2s/coherent_husimi.hpp"
#include "v2s/common.hpp"
#include "v2s/potentials.hpp"

namespace v2s {

/// Two-species phase-space densities on a shared grid (d = 1), index iq * np + ip.
/// Normalised so that (2 pi)^-1 int m_alpha dq dp = n_alpha.
struct SpeciesPairDistribution {
  PhaseGrid grid;
  ScalingContext ctx;
  RealVec m1;
  RealVec m2;
  double t = 0.0;

  const RealVec& species(int alpha) const { return alpha == 1 ? m1 : m2; }
  RealVec& species(int alpha) { return alpha == 1 ? m1 : m2; }
};

// Samples f1(q, p) and f2(q, p) and rescales each to mass n_alpha (a species
// with n_alpha = 0 is stored as zeros).
SpeciesPairDistribution make_distribution(const PhaseGrid& grid, const ScalingContext& ctx,
                                          const std::function<double(double, double)>& f1,
                                          const std::function<double(double, double)>& f2);

// rho(q_i) = (2 pi)^-1 sum_p m dp
RealVec density(const RealVec& m, const PhaseGrid& grid);
double species_mass(const RealVec& m, const PhaseGrid& grid);

enum class ConvolutionMethod { Direct, FFT };

struct ForceField {
  RealVec F1;  // grad V11 * rho1 + grad V12 * rho2
  RealVec F2;  // grad V22 * rho2 + grad V21 * rho1
};

// Periodic convolution (grad V * rho)(q_i) = sum_j dq grad V(q_i - q_j) rho_j with the
// minimum-image kernel, zero at exactly half the box.
RealVec convolve_grad(const Potential& v, const RealVec& rho, const PhaseGrid& grid,
                      ConvolutionMethod method = ConvolutionMethod::FFT);
ForceField force_field(const RealVec& rho1, const RealVec& rho2, const PotentialSet& pots,
                       const PhaseGrid& grid, ConvolutionMethod method = ConvolutionMethod::FFT);

struct StepLog {
  double clipped_mass = 0.0;  // mass removed by the sign clip (restored by rescaling)
};

class VlasovSolver {
 public:
  VlasovSolver(PotentialSet pots, ConvolutionMethod method = ConvolutionMethod::FFT);

  // One Strang step: half q-advection, p-advection with the frozen force, half q-advection.
  SpeciesPairDistribution step(const SpeciesPairDistribution& s, double dt,
                               StepLog* log = nullptr) const;

  // Reference max |m| for the blow-up guard; taken from the first state seen if unset.
  void set_reference_max(double v) { ref_max_ = v; }

 private:
  PotentialSet pots_;
  ConvolutionMethod method_;
  mutable double ref_max_ = 0.0;
};

struct Conserved {
  double mass1 = 0.0;
  double mass2 = 0.0;
  double momentum = 0.0;
  double energy = 0.0;
};

Conserved conserved_quantities(const SpeciesPairDistribution& s, const PotentialSet& pots);

struct ConservationRow {
  double t;
  Conserved c;
  double clipped_mass;
};

struct Trajectory {
  std::vector<SpeciesPairDistribution> snapshots;
  std::vector<ConservationRow> log;
};

// Runs to T with steps of at most dt (the step is shortened so that T is hit
// exactly); snapshot times are rounded to the nearest step.
Trajectory run(const SpeciesPairDistribution& initial, const PotentialSet& pots, double T, double dt,
               const std::vector<double>& snapshot_times,
               ConvolutionMethod method = ConvolutionMethod::FFT);

// Shift of a line of values: out(x_i) = in(x_i - s dx), cubic B-spline, either
// periodic or with zero values outside. Whole-cell shifts are exact copies.
void shift_line(const double* in, double* out, int n, double s, bool periodic,
                std::ptrdiff_t stride = 1);

// ---- documented scenario used by the acceptance suite and the demo config ----
struct TwoBlobScenario {
  double L = 8.0;
  double p_max = 4.0;
  int nq = 128;
  int np = 128;
  double q1 = -1.0, q2 = 1.0;
  double p1 = 0.3, p2 = -0.3;
  double sq = 0.5, sp = 0.5;
};

SpeciesPairDistribution two_blob_initial(const TwoBlobScenario& sc, const ScalingContext& ctx);
PotentialSet two_blob_potentials();

}  // namespace v2s
