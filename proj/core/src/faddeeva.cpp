#include "qcw/faddeeva.hpp"

#include <cmath>
#include <limits>

#include "qcw/types.hpp"

namespace qcw {

namespace {

constexpr double kSqrtPi = 1.7724538509055160272981674833411452;
constexpr double kLatticeStep = 0.4;  // trapezoid spacing h; error floor ~ e^{-pi^2/h^2}
constexpr int kLatticeTerms = 19;     // |n| h <= 7.6 covers the Gaussian to ~1e-25

// Laplace continued fraction, accurate to ~1e-14 for |z| >= 16, Im z >= 0.
std::complex<double> w_continued_fraction(std::complex<double> z) {
  std::complex<double> f = 0.0;
  for (int k = 12; k >= 1; --k) f = (0.5 * k) / (z - f);
  return std::complex<double>(0.0, 1.0 / kSqrtPi) / (z - f);
}

// Trapezoidal sum over the lattice t_n (integer or half-integer multiples of
// h) plus the aliasing residue 2 e^{-z^2} q / (1 -+ q), q = e^{2 pi i z / h}.
// The residue term only applies for Im z < pi/h; beyond ~5 it is < 1e-50.
std::complex<double> w_lattice(std::complex<double> z) {
  const double x = z.real();
  const double y = z.imag();
  const double h = kLatticeStep;

  const double d = x / h - std::round(x / h);
  const bool integer_lattice = std::abs(d) >= 0.25;

  std::complex<double> sum = 0.0;
  if (integer_lattice) {
    for (int n = -kLatticeTerms; n <= kLatticeTerms; ++n) {
      const double t = n * h;
      sum += std::exp(-t * t) / (z - t);
    }
  } else {
    for (int n = -kLatticeTerms; n <= kLatticeTerms; ++n) {
      const double t = (n + 0.5) * h;
      sum += std::exp(-t * t) / (z - t);
    }
  }
  std::complex<double> w = std::complex<double>(0.0, h / kPi) * sum;

  if (y < 5.0) {
    const std::complex<double> two_pi_i_z_h(-2.0 * kPi * y / h, 2.0 * kPi * x / h);
    const std::complex<double> q = std::exp(two_pi_i_z_h);
    const std::complex<double> eq = std::exp(-z * z + two_pi_i_z_h);  // e^{-z^2} q, bounded exponent
    if (integer_lattice)
      w -= 2.0 * eq / (1.0 - q);
    else
      w += 2.0 * eq / (1.0 + q);
  }
  return w;
}

}  // namespace

std::complex<double> faddeeva_w(std::complex<double> z) {
  if (z.imag() < 0.0) throw DomainError("faddeeva_w requires Im(z) >= 0");
  if (std::norm(z) >= 256.0) return w_continued_fraction(z);
  return w_lattice(z);
}

double voigt_kernel(double x, double y) {
  return faddeeva_w(std::complex<double>(x, y)).real();
}

double erfcx(double t) {
  if (t >= 0.0) return faddeeva_w(std::complex<double>(0.0, t)).real();
  // erfcx(-t) = 2 e^{t^2} - erfcx(t); guard the exponential.
  const double t2 = t * t;
  if (t2 > 700.0) return std::numeric_limits<double>::infinity();
  return 2.0 * std::exp(t2) - erfcx(-t);
}

}  // namespace qcw
