#include "v2s/potentials.hpp"

#include <algorithm>
#include <vector>

namespace v2s {

namespace {

double sinc(double v) {
  if (std::abs(v) < 1e-4) return 1.0 - v * v / 6.0;
  return std::sin(v) / v;
}

// d/dv sinc(v)
double sinc_prime(double v) {
  if (std::abs(v) < 0.05) {
    // sum_{n>=1} (-1)^n 2n v^(2n-1) / (2n+1)!
    double term_fact = 6.0;  // (2n+1)! for n = 1
    double vp = v;
    double s = 0.0;
    for (int n = 1; n <= 6; ++n) {
      const double sign = (n % 2 == 1) ? -1.0 : 1.0;
      s += sign * 2.0 * n * vp / term_fact;
      vp *= v * v;
      term_fact *= (2.0 * n + 2.0) * (2.0 * n + 3.0);
    }
    return s;
  }
  return (v * std::cos(v) - std::sin(v)) / (v * v);
}

double sinc_second(double v) {
  if (std::abs(v) < 0.05) {
    // sum_{n>=1} (-1)^n 2n (2n-1) v^(2n-2) / (2n+1)!
    double term_fact = 6.0;
    double vp = 1.0;
    double s = 0.0;
    for (int n = 1; n <= 6; ++n) {
      const double sign = (n % 2 == 1) ? -1.0 : 1.0;
      s += sign * 2.0 * n * (2.0 * n - 1.0) * vp / term_fact;
      vp *= v * v;
      term_fact *= (2.0 * n + 2.0) * (2.0 * n + 3.0);
    }
    return s;
  }
  return (-v * v * std::sin(v) - 2.0 * v * std::cos(v) + 2.0 * std::sin(v)) / (v * v * v);
}

// One axis of the band-limited product: inverse transform of (1 - |eta|/b)_+,
// which is b sinc^2(b x / 2).
double tri_factor(double b, double x) {
  const double s = sinc(0.5 * b * x);
  return b * s * s;
}

double tri_factor_d1(double b, double x) {
  const double v = 0.5 * b * x;
  return b * 2.0 * sinc(v) * sinc_prime(v) * 0.5 * b;
}

double tri_factor_d2(double b, double x) {
  const double v = 0.5 * b * x;
  const double s = sinc(v), sp = sinc_prime(v), spp = sinc_second(v);
  return b * 2.0 * (sp * sp + s * spp) * 0.25 * b * b;
}

}  // namespace

std::string to_string(PotentialKind k) {
  switch (k) {
    case PotentialKind::Zero: return "zero";
    case PotentialKind::Gaussian: return "gaussian";
    case PotentialKind::BandLimited: return "band_limited";
  }
  return "?";
}

PotentialKind potential_kind_from_string(const std::string& s) {
  if (s == "zero") return PotentialKind::Zero;
  if (s == "gaussian") return PotentialKind::Gaussian;
  if (s == "band_limited") return PotentialKind::BandLimited;
  throw ConfigError("unknown potential kind '" + s + "'");
}

Potential::Potential(PotentialKind kind, double amplitude, double width_or_bandlimit, int d)
    : kind_(kind), amplitude_(amplitude), width_(width_or_bandlimit), d_(d) {
  if (d < 1 || d > 3) throw InvalidInput("potential dimension must be 1, 2 or 3");
  if (!std::isfinite(amplitude)) throw InvalidInput("potential amplitude must be finite");
  if (kind != PotentialKind::Zero && !(width_or_bandlimit > 0.0))
    throw InvalidInput("potential width/band must be positive");
  if (kind == PotentialKind::Zero) amplitude_ = 0.0;
  measure_constants();
}

double Potential::value(std::span<const double> x) const {
  switch (kind_) {
    case PotentialKind::Zero: return 0.0;
    case PotentialKind::Gaussian: {
      double r2 = 0.0;
      for (int i = 0; i < d_; ++i) r2 += x[i] * x[i];
      return amplitude_ * std::exp(-r2 / (2.0 * width_ * width_));
    }
    case PotentialKind::BandLimited: {
      double v = amplitude_;
      for (int i = 0; i < d_; ++i) v *= tri_factor(width_, x[i]);
      return v;
    }
  }
  return 0.0;
}

void Potential::grad(std::span<const double> x, std::span<double> out) const {
  switch (kind_) {
    case PotentialKind::Zero:
      for (int i = 0; i < d_; ++i) out[i] = 0.0;
      return;
    case PotentialKind::Gaussian: {
      const double v = value(x);
      for (int i = 0; i < d_; ++i) out[i] = -x[i] / (width_ * width_) * v;
      return;
    }
    case PotentialKind::BandLimited: {
      double f[3], g[3];
      for (int i = 0; i < d_; ++i) {
        f[i] = tri_factor(width_, x[i]);
        g[i] = tri_factor_d1(width_, x[i]);
      }
      for (int i = 0; i < d_; ++i) {
        double v = amplitude_ * g[i];
        for (int j = 0; j < d_; ++j)
          if (j != i) v *= f[j];
        out[i] = v;
      }
      return;
    }
  }
}

double Potential::grad(double x) const {
  double g = 0.0;
  grad(std::span<const double>(&x, 1), std::span<double>(&g, 1));
  return g;
}

double Potential::curvature(double x) const {
  switch (kind_) {
    case PotentialKind::Zero: return 0.0;
    case PotentialKind::Gaussian: {
      const double w2 = width_ * width_;
      return amplitude_ * (x * x / (w2 * w2) - 1.0 / w2) * std::exp(-x * x / (2.0 * w2));
    }
    case PotentialKind::BandLimited: return amplitude_ * tri_factor_d2(width_, x);
  }
  return 0.0;
}

double Potential::fourier(std::span<const double> eta) const {
  switch (kind_) {
    case PotentialKind::Zero: return 0.0;
    case PotentialKind::Gaussian: {
      double e2 = 0.0;
      for (int i = 0; i < d_; ++i) e2 += eta[i] * eta[i];
      return amplitude_ * std::pow(width_ / std::sqrt(2.0 * kPi), d_) *
             std::exp(-0.5 * width_ * width_ * e2);
    }
    case PotentialKind::BandLimited: {
      double v = amplitude_;
      for (int i = 0; i < d_; ++i) {
        const double f = 1.0 - std::abs(eta[i]) / width_;
        if (f <= 0.0) return 0.0;
        v *= f;
      }
      return v;
    }
  }
  return 0.0;
}

double Potential::support_volume() const {
  switch (kind_) {
    case PotentialKind::Zero: return 0.0;
    case PotentialKind::Gaussian: return std::numeric_limits<double>::infinity();
    case PotentialKind::BandLimited: return std::pow(2.0 * width_, d_);
  }
  return 0.0;
}

void Potential::measure_constants() {
  lipschitz_grad_ = sup_grad_ = fourier_amp_ = 0.0;
  if (kind_ == PotentialKind::Zero || amplitude_ == 0.0) {
    band_ = 0.0;
    return;
  }
  // Rays along the axes and the main diagonal.
  std::vector<std::vector<double>> dirs;
  for (int i = 0; i < d_; ++i) {
    std::vector<double> e(d_, 0.0);
    e[i] = 1.0;
    dirs.push_back(e);
  }
  if (d_ > 1) dirs.push_back(std::vector<double>(d_, 1.0 / std::sqrt(static_cast<double>(d_))));

  const double reach = (kind_ == PotentialKind::Gaussian) ? 10.0 * width_ : 60.0 / width_;
  const int ns = 40001;
  std::vector<double> x(d_), g(d_), gprev(d_);
  for (const auto& e : dirs) {
    double rprev = 0.0;
    for (int s = 0; s < ns; ++s) {
      const double r = -reach + 2.0 * reach * s / (ns - 1);
      for (int i = 0; i < d_; ++i) x[i] = r * e[i];
      grad(x, g);
      double gn = 0.0;
      for (int i = 0; i < d_; ++i) gn += g[i] * g[i];
      sup_grad_ = std::max(sup_grad_, std::sqrt(gn));
      if (s > 0) {
        double dg = 0.0;
        for (int i = 0; i < d_; ++i) dg += (g[i] - gprev[i]) * (g[i] - gprev[i]);
        lipschitz_grad_ = std::max(lipschitz_grad_, std::sqrt(dg) / (r - rprev));
      }
      gprev = g;
      rprev = r;
    }
  }
  // Sampled maxima are padded slightly so that off-sample points stay below them.
  sup_grad_ *= 1.001;
  lipschitz_grad_ *= 1.01;

  if (kind_ == PotentialKind::Gaussian) {
    band_ = std::numeric_limits<double>::infinity();
    const int nf = 40001;
    const double emax = 12.0 / width_;
    std::vector<double> eta(d_, 0.0);
    for (int s = 0; s < nf; ++s) {
      eta[0] = emax * s / (nf - 1);
      fourier_amp_ = std::max(fourier_amp_, eta[0] * std::abs(fourier(eta)));
    }
    fourier_amp_ *= 1.0001;
  } else {
    // Support scan along the diagonal, where the product support reaches farthest.
    const double h = width_ / 4000.0;
    std::vector<double> eta(d_);
    const double inv = 1.0 / std::sqrt(static_cast<double>(d_));
    double last = 0.0;
    for (int s = 1; s <= 8000; ++s) {
      const double r = s * h * std::sqrt(static_cast<double>(d_));
      for (int i = 0; i < d_; ++i) eta[i] = r * inv;
      if (fourier(eta) != 0.0) last = r;
    }
    band_ = last + h * std::sqrt(static_cast<double>(d_));
    // sup |eta| |Vhat| on a dense grid of the support box.
    const int per_axis = (d_ == 1) ? 40001 : (d_ == 2 ? 801 : 121);
    std::vector<int> idx(d_, 0);
    long total = 1;
    for (int i = 0; i < d_; ++i) total *= per_axis;
    for (long c = 0; c < total; ++c) {
      long rem = c;
      double e2 = 0.0;
      for (int i = 0; i < d_; ++i) {
        idx[i] = static_cast<int>(rem % per_axis);
        rem /= per_axis;
        eta[i] = width_ * idx[i] / (per_axis - 1);
        e2 += eta[i] * eta[i];
      }
      fourier_amp_ = std::max(fourier_amp_, std::sqrt(e2) * std::abs(fourier(eta)));
    }
    fourier_amp_ *= 1.0001;
  }
}

const Potential& PotentialSet::pair(int alpha, int beta) const {
  if (alpha == 1 && beta == 1) return v11;
  if (alpha == 2 && beta == 2) return v22;
  if ((alpha == 1 && beta == 2) || (alpha == 2 && beta == 1)) return v12;
  throw InvalidInput("species index must be 1 or 2");
}

bool AssumptionReport::all_pass() const {
  for (const auto& e : entries)
    if (!e.even || !e.fourier_c0 || !e.grad_bounded || !e.grad_lipschitz) return false;
  return band_limit_status != "UNMET";
}

double AssumptionReport::A() const {
  double a = 0.0;
  for (const auto& e : entries) a = std::max(a, e.A);
  return a;
}

double AssumptionReport::B() const {
  double b = 0.0;
  for (const auto& e : entries) b = std::max(b, e.B);
  return b;
}

AssumptionReport validate_assumptions(const PotentialSet& set, bool fourier_requested) {
  AssumptionReport rep;
  rep.fourier_requested = fourier_requested;
  const Potential* pots[3] = {&set.v11, &set.v22, &set.v12};
  const char* names[3] = {"v11", "v22", "v12"};
  bool all_band = true;
  for (int k = 0; k < 3; ++k) {
    const Potential& p = *pots[k];
    auto& e = rep.entries[k];
    e.name = names[k];
    const int d = p.dim();
    std::vector<double> x(d), mx(d), g(d), mg(d), eta(d);
    // Evenness and decay of the transform on a deterministic scatter.
    const double scale = (p.kind() == PotentialKind::BandLimited) ? 10.0 / p.width_or_bandlimit()
                                                                  : 4.0 * p.width_or_bandlimit();
    for (int s = 0; s < 997; ++s) {
      for (int i = 0; i < d; ++i) {
        x[i] = scale * std::sin(1.3 * s + 0.7 * i + 0.1);
        mx[i] = -x[i];
      }
      const double v = p.value(x), mv = p.value(mx);
      if (std::abs(v - mv) > 1e-12 * std::max(1.0, std::abs(v))) e.even = false;
      p.grad(x, g);
      p.grad(mx, mg);
      for (int i = 0; i < d; ++i)
        if (std::abs(g[i] + mg[i]) > 1e-12 * std::max(1.0, std::abs(g[i]))) e.even = false;
    }
    double peak = 0.0;
    std::fill(eta.begin(), eta.end(), 0.0);
    peak = std::abs(p.fourier(eta));
    for (int i = 0; i < d; ++i) eta[i] = 1e6;
    const double far = std::abs(p.fourier(eta));
    e.fourier_c0 = std::isfinite(peak) && far <= 1e-12 * std::max(peak, 1e-300) + 1e-300;
    e.sup_grad = p.sup_grad();
    e.lipschitz_grad = p.lipschitz_grad();
    e.grad_bounded = std::isfinite(e.sup_grad);
    e.grad_lipschitz = std::isfinite(e.lipschitz_grad);
    e.A = p.fourier_amp();
    e.B = p.fourier_band();
    e.band_limited = p.band_limited();
    all_band = all_band && e.band_limited;
  }
  if (!fourier_requested)
    rep.band_limit_status = "not requested";
  else
    rep.band_limit_status = all_band ? "MET" : "UNMET";
  return rep;
}

}  // namespace v2s
