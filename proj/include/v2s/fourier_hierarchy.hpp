#pragma once

#include <map>
#include <utility>
#include <vector>

#include "v2s/coherent_husimi.hpp"
#include "v2s/hierarchy.hpp"
#include "v2s/potentials.hpp"

namespace v2s {

/// Probe nodes -xi_max + i * 2 xi_max / (nodes - 1) on every (xi, eta) axis.
struct FourierGrid {
  double xi_max = 4.0;
  int nodes = 17;

  double node(int i) const { return -xi_max + i * spacing(); }
  double spacing() const { return 2.0 * xi_max / (nodes - 1); }
  void validate() const;
};

/// Characteristic function of the normalised (k,l) measure on the probe grid.
/// Axes per slot (xi, eta), species-1 slots first, first axis most significant.
struct CharLevel {
  int k = 0;
  int l = 0;
  std::vector<cplx> values;

  int order() const { return k + l; }
};

struct CharFamily {
  FourierGrid fgrid;
  ScalingContext ctx;
  int max_order = 2;
  std::map<std::pair<int, int>, CharLevel> levels;

  bool has(int k, int l) const { return levels.count({k, l}) > 0; }
  const CharLevel& at(int k, int l) const;  // MissingLevel
  void insert(CharLevel c);
  std::size_t axis_size(int order) const;
};

inline constexpr double kCharNormTolerance = 1e-4;

// mu(xi, eta) = (2 pi)^-n n1^-k n2^-l sum_Z w m(Z) exp(i sum (xi_s p_s + eta_s q_s)).
// NormalizationGap when |mu(0) - 1| exceeds kCharNormTolerance.
CharLevel to_characteristic(const HusimiMeasure& m, const FourierGrid& fgrid);
// One-slot grid function of species mass n_alpha (Vlasov normalisation).
CharLevel to_characteristic(const RealVec& m, const PhaseGrid& grid, double n_alpha, int species,
                            const FourierGrid& fgrid);
CharFamily to_characteristic(const HusimiFamily& fam, const FourierGrid& fgrid);

// Exact direct sum at one argument.
cplx characteristic_value(const RealVec& m, const PhaseGrid& grid, double n_alpha, double xi,
                          double eta);

/// Tabulated one-particle characteristic function with 4x4 Lagrange
/// interpolation. at(xi, eta, t) returns the interaction-picture value
/// mu(xi - eta t, eta).
class OneParticleChar {
 public:
  OneParticleChar() = default;
  OneParticleChar(const RealVec& m, const PhaseGrid& grid, double n_alpha, double xi_half,
                  double eta_half, double spacing);

  cplx operator()(double xi, double eta) const;  // ExtrapolationNeeded outside the table
  cplx at(double xi, double eta, double t) const { return (*this)(xi - eta * t, eta); }
  bool empty() const { return values_.empty(); }
  double xi_half() const { return xi_half_; }
  double eta_half() const { return eta_half_; }

 private:
  double xi_half_ = 0.0;
  double eta_half_ = 0.0;
  double h_ = 1.0;
  int nx_ = 0;
  int ne_ = 0;
  std::vector<cplx> values_;  // ix * ne + ie
};

// Shift xi_s -> xi_s - eta_s t on every slot (cubic interpolation along xi).
// Nodes whose shifted argument leaves the probe box use the edge stencil;
// ExtrapolationNeeded, with their fraction, when it exceeds max_outside_fraction.
CharFamily interaction_rep(const CharFamily& fam, double t, double max_outside_fraction = 0.0,
                           double* outside_fraction = nullptr);

/// Values of a family at arbitrary arguments (2 (k + l) numbers).
class CharSource {
 public:
  virtual ~CharSource() = default;
  virtual cplx value(int k, int l, const double* args) const = 0;
};

enum class OutOfBox { Throw, Zero };

/// Stored levels, interpolated; optional factorised closure above them.
class FamilySource : public CharSource {
 public:
  explicit FamilySource(const CharFamily& fam, OutOfBox policy = OutOfBox::Throw,
                        const CharSource* closure = nullptr)
      : fam_(fam), policy_(policy), closure_(closure) {}
  cplx value(int k, int l, const double* args) const override;

 private:
  const CharFamily& fam_;
  OutOfBox policy_;
  const CharSource* closure_;
};

/// Products of one-particle characteristic functions in the interaction picture at time t.
class FactorizedSource : public CharSource {
 public:
  FactorizedSource(const OneParticleChar* species1, const OneParticleChar* species2, double t)
      : s1_(species1), s2_(species2), t_(t) {}
  cplx value(int k, int l, const double* args) const override;

 private:
  const OneParticleChar* s1_;
  const OneParticleChar* s2_;
  double t_;
};

CharFamily sample_family(const CharSource& src, const FourierGrid& fgrid, const ScalingContext& ctx,
                         int max_order);

// (K(t) mu)^(k,l) at one argument; eta integrals by Gauss-Legendre on each
// half of supp Vhat with eta_nodes in total. BandLimitRequired for potentials
// without a finite band.
cplx apply_K_at(const CharSource& src, int k, int l, const double* args, double t,
                const PotentialSet& pots, const ScalingContext& ctx, int eta_nodes = 33);

// Family one level shorter: every level of order < fam.max_order.
CharFamily apply_K(const CharFamily& fam, double t, const PotentialSet& pots, int eta_nodes = 33,
                   OutOfBox policy = OutOfBox::Throw);

struct PicardConstants {
  double A = 0.0;  // sup |eta Vhat(eta)| over the three potentials
  double B = 0.0;  // largest band
  double C = 0.0;  // max |xi| on the probe box
  double D = 0.0;  // max |eta| on the probe box
  double support_volume = 0.0;  // 2B in d = 1
};

PicardConstants picard_constants(const PotentialSet& pots, const FourierGrid& fgrid);
double horizon_tau(const PicardConstants& c);

struct QuadLevel {
  int time_nodes = 6;
  int eta_nodes = 33;
};

struct PicardConfig {
  int depth = 3;  // L: terms j = 0 .. L-1
  double t = 0.0;
  // nodes per nested K application, outermost first; the last entry repeats
  std::vector<QuadLevel> schedule = {{6, 33}, {4, 12}, {2, 4}};
  PicardConstants constants;
  double horizon = 0.0;
};

PicardConfig picard_config(const PotentialSet& pots, const FourierGrid& fgrid, double t, int depth);

struct PicardResult {
  int k = 0;
  int l = 0;
  std::vector<std::vector<double>> probes;    // arguments per probe
  std::vector<std::vector<cplx>> terms;       // [j][probe], j = 0 .. depth-1
  std::vector<cplx> sum;                      // depth-L output per probe
  double eta_quadrature_error = 0.0;          // first term, by node doubling

  double term_sup(int j) const;  // sup over probes of |T_j|
};

// mu0 + sum_{j=1}^{L-1} time-ordered K(t1)...K(tj) mu0 at the probes.
// InvalidInput when t exceeds the horizon; DepthExceedsFamily when mu0 cannot
// supply a level the series reaches.
PicardResult picard_iterate(const CharSource& mu0, int k, int l,
                            const std::vector<std::vector<double>>& probes, const PicardConfig& cfg,
                            const PotentialSet& pots, const ScalingContext& ctx);

// All nodes of the probe box for one level.
std::vector<std::vector<double>> probe_box(const FourierGrid& fgrid, int order);

// (4 |supp Vhat| A)^L ((C + D|t|) n) prod_{m=1}^{L-1} ((C + D|t|) n + (n + m) B |t|) |t|^L / L!,
// n = k + l and L = cfg.depth.
double delta_L_bound(const PicardConfig& cfg, int k, int l);

}  // namespace v2s
