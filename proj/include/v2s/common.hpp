#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2s {

using cplx = std::complex<double>;
using RealVec = std::vector<double>;
using CplxVec = std::vector<cplx>;

inline constexpr double kPi = 3.14159265358979323846;

// Error families map one-to-one onto CLI exit codes.
enum class ErrorFamily { Config = 2, Capacity = 3, Numeric = 4, Internal = 5 };

class Error : public std::runtime_error {
 public:
  Error(std::string name, ErrorFamily family, const std::string& what)
      : std::runtime_error(name + ": " + what), name_(std::move(name)), family_(family) {}
  const std::string& name() const { return name_; }
  ErrorFamily family() const { return family_; }
  int exit_code() const { return static_cast<int>(family_); }

 private:
  std::string name_;
  ErrorFamily family_;
};

#define V2S_DEFINE_ERROR(Name, Family)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(#Name, Family, what) {} \
  };

V2S_DEFINE_ERROR(InvalidInput, ErrorFamily::Config)
V2S_DEFINE_ERROR(ConfigError, ErrorFamily::Config)
V2S_DEFINE_ERROR(CapacityExceeded, ErrorFamily::Capacity)
V2S_DEFINE_ERROR(OrderTooHigh, ErrorFamily::Capacity)
V2S_DEFINE_ERROR(SupportTooLarge, ErrorFamily::Capacity)
V2S_DEFINE_ERROR(DegenerateOrbitals, ErrorFamily::Numeric)
V2S_DEFINE_ERROR(KrylovStagnation, ErrorFamily::Numeric)
V2S_DEFINE_ERROR(ImaginaryResidue, ErrorFamily::Numeric)
V2S_DEFINE_ERROR(BlowUp, ErrorFamily::Numeric)
V2S_DEFINE_ERROR(NormalizationGap, ErrorFamily::Numeric)
V2S_DEFINE_ERROR(ExtrapolationNeeded, ErrorFamily::Numeric)
V2S_DEFINE_ERROR(NonConvergence, ErrorFamily::Numeric)
V2S_DEFINE_ERROR(MissingLevel, ErrorFamily::Config)
V2S_DEFINE_ERROR(BandLimitRequired, ErrorFamily::Config)
V2S_DEFINE_ERROR(DepthExceedsFamily, ErrorFamily::Config)
V2S_DEFINE_ERROR(InternalError, ErrorFamily::Internal)

#undef V2S_DEFINE_ERROR

/// Particle numbers and the semiclassical parameter hbar = N^(-1/d).
struct ScalingContext {
  int N1 = 1;
  int N2 = 0;
  int d = 1;

  int N() const { return N1 + N2; }
  double n1() const { return static_cast<double>(N1) / N(); }
  double n2() const { return static_cast<double>(N2) / N(); }
  double hbar() const;
  void validate() const;
};

/// Periodic lattice with M sites per axis.
struct LatticeConfig {
  int M = 8;
  double dx = 1.0;
  int d = 1;

  int sites() const;
  double length() const { return M * dx; }
  double cell_volume() const;
  // Coordinates of a flat site index, components in [0, M-1].
  void coords(int site, int* out) const;
  int flat(const int* c) const;
  // Position of a site with the origin at the lattice centre, i.e. x_j = (j - M/2) dx.
  double position(int axis_index) const { return (axis_index - M / 2) * dx; }
  void validate(const ScalingContext& ctx) const;
};

// Minimum-image wrap of a displacement into [-L/2, L/2].
double min_image(double x, double L);

// Exactly 0 at the half-box point so that odd kernels stay odd on the grid.
bool at_half_box(double x, double L);

struct QuadratureRule {
  RealVec nodes;
  RealVec weights;
};

// n-point Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

}  // namespace v2s
