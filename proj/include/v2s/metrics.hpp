#pragma once

#include <vector>

#include "v2s/coherent_husimi.hpp"
#include "v2s/common.hpp"

namespace v2s {

/// Weighted points in phase space, coordinates flattened point-major.
/// Coordinate 0 is periodic with period `period` when period > 0.
struct DiscreteMeasure {
  int dim = 2;
  RealVec coords;
  RealVec weights;
  double period = 0.0;

  std::size_t size() const { return weights.size(); }
  double total_mass() const;
  const double* point(std::size_t i) const { return coords.data() + i * dim; }
  void add(const double* x, double w);
};

double ground_distance(const DiscreteMeasure& a, std::size_t i, const DiscreteMeasure& b,
                       std::size_t j);

enum class W1Mode { Exact, Entropic };

struct W1Options {
  std::size_t max_support = 4096;  // exact mode, per measure
  double target_gap = 0.02;         // entropic mode, relative
  int max_iterations = 20000;
};

struct W1Result {
  double value = 0.0;
  double lower_bound = 0.0;   // dual objective (entropic) or value (exact)
  double gap = 0.0;           // relative certified gap
  double mass_adjustment = 0.0;  // |mass_a - mass_b| before renormalising b
  long iterations = 0;
};

W1Result wasserstein1(const DiscreteMeasure& a, const DiscreteMeasure& b, W1Mode mode = W1Mode::Exact,
                      const W1Options& opt = {});

// int |F_a - F_b| along one coordinate (non-periodic).
double wasserstein1_marginal_1d(const DiscreteMeasure& a, const DiscreteMeasure& b, int axis);

struct PhaseMoments {
  double mass = 0.0;
  double mean_q = 0.0;
  double mean_p = 0.0;
  double abs_q = 0.0;
  double q2 = 0.0;
  double p2 = 0.0;
};

// (2 pi)^-1 int (.) m dq dp for a one-particle grid function.
PhaseMoments phase_moments(const RealVec& m, const PhaseGrid& grid);

struct Aggregated {
  DiscreteMeasure measure;
  double error_bound = 0.0;  // max block diameter times mass
};

// Mass-conservative box aggregation of a one-particle grid function into
// bq x bp blocks; each block becomes a point at its centre carrying
// (2 pi)^-1 times its mass.
Aggregated aggregate(const RealVec& m, const PhaseGrid& grid, int blocks_q, int blocks_p);

}  // namespace v2s
