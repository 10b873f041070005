#pragma once

#include <variant>
#include <vector>

#include "qcw/types.hpp"

// Analytic lineshape and coherence-time machinery: Voigt profiles in the
// spectral and time domains, FWHM composition, Fourier-limit relations and
// the T2 = integral |g1|^2 identity.

namespace qcw {

/// First-order coherence curve: either closed-form Voigt parameters or a
/// sampled |g1| on a picosecond delay grid.
struct G1Curve {
  struct Sampled {
    std::vector<double> delay_ps;
    std::vector<double> g1;
  };
  std::variant<VoigtParams, Sampled> repr;

  static G1Curve closed_form(const VoigtParams& p) { return {p}; }
  static G1Curve sampled(std::vector<double> delay_ps, std::vector<double> g1) {
    return {Sampled{std::move(delay_ps), std::move(g1)}};
  }
};

/// Voigt profile at spectral offset x (GHz absolute; p.center_ghz is
/// subtracted). Unit peak at the center before amplitude/offset scaling:
/// returns amplitude * V(x - center) + offset with V(0) = 1.
double voigt_eval(double x_ghz, const VoigtParams& p);

/// Total FWHM of a Voigt profile with Lorentzian FWHM gamma_hom and Gaussian
/// FWHM gamma_inhom (GHz). Olivero-Longbothum composition, accurate to
/// better than 0.03% of the exact width; endpoints are exact by construction.
double voigt_fwhm(double gamma_hom_ghz, double gamma_inhom_ghz);

/// Exact FWHM by root-finding on the evaluated profile (validation path).
double voigt_fwhm_numeric(double gamma_hom_ghz, double gamma_inhom_ghz);

/// |g1(tau)| of a Voigt emitter, the Fourier transform of the spectral
/// density: exp(-pi G_hom |tau|) * exp(-(pi G_inhom tau)^2 / (4 ln2)),
/// with tau in ps and widths in GHz.
double g1_voigt(double tau_ps, const VoigtParams& p);

/// T2 = integral over (-inf, inf) of |g1(tau)|^2 dtau, in ns.
/// Closed forms use adaptive quadrature to 1e-6 relative; sampled curves are
/// integrated on their grid and must decay below 1e-6 at the edges.
double coherence_time_ns(const G1Curve& g1);

struct FourierLimit {
  double t2_ft_ns;
  double gamma_ft_ghz;
};

/// Fourier-limited coherence time and linewidth from a radiative lifetime:
/// T2_FT = 2 T1, Gamma_FT = 1 / (pi T2_FT).
FourierLimit fourier_limit(double t1_ns);

}  // namespace qcw
