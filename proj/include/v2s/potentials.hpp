#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "v2s/common.hpp"

namespace v2s {

enum class PotentialKind { Zero, Gaussian, BandLimited };

std::string to_string(PotentialKind k);
PotentialKind potential_kind_from_string(const std::string& s);

/// Even pair potential on R^d.
///
/// gaussian:     V(x) = amplitude * exp(-|x|^2 / (2 w^2)), w = width_or_bandlimit.
/// band_limited: Vhat(eta) = amplitude * prod_i (1 - |eta_i|/b)_+, b = width_or_bandlimit,
///               so amplitude is the value of the transform at the origin.
/// Fourier convention: V(x) = int Vhat(eta) e^{i eta x} d eta.
class Potential {
 public:
  Potential() : Potential(PotentialKind::Zero, 0.0, 1.0, 1) {}
  Potential(PotentialKind kind, double amplitude, double width_or_bandlimit, int d = 1);

  static Potential zero(int d = 1) { return Potential(PotentialKind::Zero, 0.0, 1.0, d); }
  static Potential gaussian(double amplitude, double width, int d = 1) {
    return Potential(PotentialKind::Gaussian, amplitude, width, d);
  }
  static Potential band_limited(double fourier_at_zero, double band, int d = 1) {
    return Potential(PotentialKind::BandLimited, fourier_at_zero, band, d);
  }

  PotentialKind kind() const { return kind_; }
  double amplitude() const { return amplitude_; }
  double width_or_bandlimit() const { return width_; }
  int dim() const { return d_; }
  bool is_zero() const { return kind_ == PotentialKind::Zero || amplitude_ == 0.0; }

  double value(std::span<const double> x) const;
  void grad(std::span<const double> x, std::span<double> out) const;
  double fourier(std::span<const double> eta) const;

  // One-dimensional shorthands (d must be 1).
  double value(double x) const { return value(std::span<const double>(&x, 1)); }
  double grad(double x) const;
  double fourier(double eta) const { return fourier(std::span<const double>(&eta, 1)); }

  // Second derivative along x in d = 1, used by tests and the remainder estimates.
  double curvature(double x) const;

  double lipschitz_grad() const { return lipschitz_grad_; }
  double sup_grad() const { return sup_grad_; }
  // sup{|eta| : eta in supp Vhat}; +inf for gaussian, 0 for zero.
  double fourier_band() const { return band_; }
  // sup |eta| |Vhat(eta)|.
  double fourier_amp() const { return fourier_amp_; }
  bool band_limited() const { return std::isfinite(band_); }
  // Lebesgue measure of supp Vhat (2B in d = 1).
  double support_volume() const;

 private:
  void measure_constants();

  PotentialKind kind_;
  double amplitude_;
  double width_;
  int d_;
  double lipschitz_grad_ = 0.0;
  double sup_grad_ = 0.0;
  double band_ = 0.0;
  double fourier_amp_ = 0.0;
};

/// V11, V22 and the shared cross potential V12 = V21.
struct PotentialSet {
  Potential v11;
  Potential v22;
  Potential v12;

  const Potential& v21() const { return v12; }
  // alpha, beta in {1, 2}
  const Potential& pair(int alpha, int beta) const;
  bool all_zero() const { return v11.is_zero() && v22.is_zero() && v12.is_zero(); }

  static PotentialSet zero(int d = 1) {
    return {Potential::zero(d), Potential::zero(d), Potential::zero(d)};
  }
};

struct AssumptionReport {
  struct Entry {
    std::string name;
    bool even = true;
    bool fourier_c0 = true;
    bool grad_bounded = true;
    bool grad_lipschitz = true;
    bool band_limited = true;
    double A = 0.0;
    double B = 0.0;
    double sup_grad = 0.0;
    double lipschitz_grad = 0.0;
  };
  std::array<Entry, 3> entries;
  bool fourier_requested = false;
  // "MET", "UNMET" or "not requested"
  std::string band_limit_status;

  bool all_pass() const;
  // Largest A and B over the set, the constants used by the Picard bound.
  double A() const;
  double B() const;
};

AssumptionReport validate_assumptions(const PotentialSet& set, bool fourier_requested = false);

}  // namespace v2s
