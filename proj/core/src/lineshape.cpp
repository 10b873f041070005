#include "qcw/lineshape.hpp"

#include <algorithm>
#include <cmath>

#include "qcw/faddeeva.hpp"

namespace qcw {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488016887242096981;

// Unit-peak Voigt shape at offset dx from center.
double voigt_unit(double dx, double f_lorentz, double f_gauss) {
  // vanishing Gaussian component: the reduced coordinates overflow, but the
  // profile is a plain Lorentzian to better than the evaluation tolerance
  if (f_gauss <= 1e-10 * std::max(std::abs(dx), f_lorentz)) {
    const double hwhm = 0.5 * f_lorentz;
    return hwhm * hwhm / (dx * dx + hwhm * hwhm);
  }
  if (f_lorentz == 0.0) {
    const double sigma = gaussian_sigma_from_fwhm(f_gauss);
    const double u = dx / sigma;
    return std::exp(-0.5 * u * u);
  }
  const double sigma = gaussian_sigma_from_fwhm(f_gauss);
  const double gamma = 0.5 * f_lorentz;
  const double x = dx / (sigma * kSqrt2);
  const double y = gamma / (sigma * kSqrt2);
  return voigt_kernel(x, y) / voigt_kernel(0.0, y);
}

// Adaptive Simpson on [a, b] with recursion on the standard error estimate.
double adaptive_simpson(const auto& f, double a, double b, double fa, double fm, double fb,
                        double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

double integrate(const auto& f, double a, double b, double eps) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, eps, 48);
}

}  // namespace

double voigt_eval(double x_ghz, const VoigtParams& p) {
  validate(p);
  return p.amplitude * voigt_unit(x_ghz - p.center_ghz, p.gamma_hom_ghz, p.gamma_inhom_ghz) +
         p.offset;
}

double voigt_fwhm(double gamma_hom_ghz, double gamma_inhom_ghz) {
  if (gamma_hom_ghz < 0.0 || gamma_inhom_ghz < 0.0)
    throw DomainError("voigt_fwhm: widths must be non-negative");
  if (gamma_hom_ghz == 0.0 && gamma_inhom_ghz == 0.0)
    throw DomainError("voigt_fwhm: both widths zero");
  // Endpoint identities hold exactly; the approximation is only used when
  // both components contribute.
  if (gamma_inhom_ghz == 0.0) return gamma_hom_ghz;
  if (gamma_hom_ghz == 0.0) return gamma_inhom_ghz;
  const double fl = gamma_hom_ghz;
  const double fg = gamma_inhom_ghz;
  return 0.5346 * fl + std::sqrt(0.2166 * fl * fl + fg * fg);
}

double voigt_fwhm_numeric(double gamma_hom_ghz, double gamma_inhom_ghz) {
  if (gamma_hom_ghz == 0.0 && gamma_inhom_ghz == 0.0)
    throw DomainError("voigt_fwhm_numeric: both widths zero");
  // Bisection for voigt_unit(x) = 1/2; the profile is strictly decreasing in |x|.
  double lo = 0.0;
  double hi = gamma_hom_ghz + gamma_inhom_ghz;
  while (voigt_unit(hi, gamma_hom_ghz, gamma_inhom_ghz) > 0.5) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (voigt_unit(mid, gamma_hom_ghz, gamma_inhom_ghz) > 0.5)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return lo + hi;  // 2 * midpoint
}

double g1_voigt(double tau_ps, const VoigtParams& p) {
  validate(p);
  const double tau_ns = tau_ps * 1e-3;  // GHz * ns is dimensionless
  const double lorentz = std::exp(-kPi * p.gamma_hom_ghz * std::abs(tau_ns));
  const double arg = kPi * p.gamma_inhom_ghz * tau_ns;
  const double gauss = std::exp(-arg * arg / (4.0 * kLn2));
  return lorentz * gauss;
}

double coherence_time_ns(const G1Curve& curve) {
  if (const auto* p = std::get_if<VoigtParams>(&curve.repr)) {
    validate(*p);
    // |g1|^2 = exp(-2a t - b t^2) for t >= 0, with t in ns.
    const double a = kPi * p->gamma_hom_ghz;
    const double b2 = kPi * kPi * p->gamma_inhom_ghz * p->gamma_inhom_ghz / (2.0 * kLn2);
    // Truncate where |g1|^2 < 1e-12.
    double t_max;
    if (b2 > 0.0) {
      const double log_cut = 12.0 * std::log(10.0);
      t_max = (-a + std::sqrt(a * a + b2 * log_cut)) / b2 * 1.0;
      t_max = std::max(t_max, 1e-6);
    } else {
      t_max = 12.0 * std::log(10.0) / (2.0 * a);
    }
    const auto integrand = [&](double t) { return std::exp(-2.0 * a * t - b2 * t * t); };
    const double half = integrate(integrand, 0.0, t_max, 1e-9 * t_max);
    return 2.0 * half;
  }

  const auto& s = std::get<G1Curve::Sampled>(curve.repr);
  if (s.delay_ps.size() < 2 || s.delay_ps.size() != s.g1.size())
    throw DomainError("coherence_time: sampled curve needs matching grids with >= 2 points");
  // The grid covers tau >= 0 (symmetric extension) or the full axis; detect by sign.
  const bool one_sided = s.delay_ps.front() >= 0.0;
  const double edge = std::abs(s.g1.back());
  const double edge_front = std::abs(s.g1.front());
  const double worst_edge = one_sided ? edge : std::max(edge, edge_front);
  if (worst_edge * worst_edge > 1e-6)
    throw TruncationError("coherence_time: sampled |g1| does not decay below 1e-3 at grid edge");
  double integral = 0.0;  // trapezoid in ps, converted at the end
  for (std::size_t i = 1; i < s.delay_ps.size(); ++i) {
    const double dt = s.delay_ps[i] - s.delay_ps[i - 1];
    const double f0 = s.g1[i - 1] * s.g1[i - 1];
    const double f1 = s.g1[i] * s.g1[i];
    integral += 0.5 * (f0 + f1) * dt;
  }
  if (one_sided) integral *= 2.0;
  return integral * 1e-3;
}

FourierLimit fourier_limit(double t1_ns) {
  if (!(t1_ns > 0.0)) throw DomainError("fourier_limit: t1 must be positive");
  const double t2_ft = 2.0 * t1_ns;
  return {t2_ft, 1.0 / (kPi * t2_ft)};
}

}  // namespace qcw
