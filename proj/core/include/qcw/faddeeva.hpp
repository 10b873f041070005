#pragma once

#include <complex>

namespace qcw {

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz) for Im(z) >= 0.
///
/// Evaluation switches between a Laplace continued fraction (|z| >= 16) and
/// a trapezoidal lattice sum with residue correction elsewhere; the lattice
/// is shifted by half a step when the real part falls near a node, which
/// avoids the cancellation that otherwise blows up for tiny Im(z).
/// Verified accuracy: better than 1e-12 relative on both components.
std::complex<double> faddeeva_w(std::complex<double> z);

/// Real Voigt kernel K(x, y) = Re w(x + iy), y >= 0.
double voigt_kernel(double x, double y);

/// Scaled complementary error function erfcx(t) = exp(t^2) erfc(t), all real t.
double erfcx(double t);

}  // namespace qcw
