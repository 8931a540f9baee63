#include "v2s/common.hpp"

#include <cmath>

namespace v2s {

double ScalingContext::hbar() const {
  const double n = static_cast<double>(N());
  switch (d) {
    case 1: return 1.0 / n;
    case 2: return 1.0 / std::sqrt(n);
    case 3: return 1.0 / std::cbrt(n);
    default: return std::pow(n, -1.0 / d);
  }
}

void ScalingContext::validate() const {
  if (N1 < 0 || N2 < 0) throw InvalidInput("particle numbers must be non-negative");
  if (N() < 1) throw InvalidInput("at least one particle is required");
  if (d < 1 || d > 3) throw InvalidInput("dimension must be 1, 2 or 3");
}

int LatticeConfig::sites() const {
  int s = 1;
  for (int i = 0; i < d; ++i) s *= M;
  return s;
}

double LatticeConfig::cell_volume() const { return std::pow(dx, d); }

void LatticeConfig::coords(int site, int* out) const {
  for (int a = 0; a < d; ++a) {
    out[a] = site % M;
    site /= M;
  }
}

int LatticeConfig::flat(const int* c) const {
  int s = 0;
  for (int a = d - 1; a >= 0; --a) s = s * M + ((c[a] % M) + M) % M;
  return s;
}

void LatticeConfig::validate(const ScalingContext& ctx) const {
  if (d != ctx.d) throw InvalidInput("lattice dimension differs from scaling dimension");
  if (!(dx > 0.0) || !std::isfinite(dx)) throw InvalidInput("lattice spacing must be positive");
  if (ctx.N1 > sites() || ctx.N2 > sites())
    throw InvalidInput("more particles of one species than lattice sites");
  if (M < 4) throw InvalidInput("lattice needs at least 4 sites per axis");
}

double min_image(double x, double L) {
  double r = x - L * std::nearbyint(x / L);
  if (r > 0.5 * L) r -= L;
  if (r < -0.5 * L) r += L;
  return r;
}

bool at_half_box(double x, double L) {
  const double r = std::abs(min_image(x, L));
  return std::abs(r - 0.5 * L) <= 1e-12 * L;
}

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw InvalidInput("quadrature needs at least one node");
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int j = 2; j <= n; ++j) {
      const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = r.weights[n - 1 - i] = w;
  }
  const double c = 0.5 * (b + a), h = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = c + h * r.nodes[i];
    r.weights[i] *= h;
  }
  return r;
}

}  // namespace v2s
