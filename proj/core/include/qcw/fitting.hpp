#pragma once

#include <array>

#include "qcw/nlls.hpp"
#include "qcw/types.hpp"

// Model functions and fits for the analysis pipeline: the HBT correlation
// model with three bunching processes, the co/cross cw-HOM models, TCSPC
// rise + double-exponential decay, Voigt resonance scans and Michelson
// visibility curves. IRF handling is fit-side: models are convolved with the
// Gaussian response and the deconvolved number is the bare model's value --
// never a frequency-domain division.

namespace qcw {

/// Parameters of the HBT correlation model
///   g2(tau) = a (1 - b e^{-|tau-tau0|/T_b}) prod_i (1 + c_i e^{-|tau-tau0|/T_c,i}).
struct HbtFitParams {
  double a{1.0};
  double b{1.0};
  double tau0_ps{0.0};
  double t_b_ns{0.5};
  std::array<double, 3> c{0.0, 0.0, 0.0};
  std::array<double, 3> t_c_ns{5.0, 25.0, 120.0};
};

/// Canonical ordering: bunching timescales strictly increasing, ties broken
/// by amplitude.
HbtFitParams canonicalized(HbtFitParams p);

double hbt_model(double tau_ps, const HbtFitParams& p);

struct HomFitParams {
  HbtFitParams base;
  double delta_t_ns{14.3};
  double v{1.0};        // HOM visibility of the central dip
  double t_dip_ns{0.5};  // 1/e timescale of the central dip
};

/// cross: 1/4 [g2(tau-dT) + g2(tau+dT) + 2 g2(tau)]
/// co:    cross(tau) * (1 - v e^{-|tau-tau0|/t_dip})
double hom_model(double tau_ps, const HomFitParams& p, HomPolarization pol);

/// Model convolved with a Gaussian IRF of the given FWHM, evaluated in
/// closed form (piecewise-exponential times Gaussian integrates to erfc
/// terms). Agrees with quadrature convolution of the bare model; the fits
/// use this as their forward model.
double hbt_model_convolved(double tau_ps, const HbtFitParams& p, double irf_fwhm_ps);
double hom_model_convolved(double tau_ps, const HomFitParams& p, HomPolarization pol,
                           double irf_fwhm_ps);

struct TcspcFitParams {
  double t0_ns{0.0};
  double tau_rise_ns{0.5};
  double a1{1.0};
  double a2{0.0};
  double tau1_ns{1.5};  // fast decay, canonical tau1 < tau2
  double tau2_ns{8.0};
  double background{0.0};
};

/// background + step(t-t0) (1-e^{-(t-t0)/tau_rise}) (a1 e^{-(t-t0)/tau1} + a2 e^{-(t-t0)/tau2})
double tcspc_model(double t_ns, const TcspcFitParams& p);

struct ValueWithSigma {
  double value{0.0};
  double sigma{0.0};
};

struct HbtFit {
  FitResult fit;
  HbtFitParams params;
  ValueWithSigma g2_raw0;    // IRF-convolved model at tau0
  ValueWithSigma g2_decon0;  // bare model at tau0
};

/// Fits the IRF-convolved correlation model to a normalized histogram.
/// Initialization is deterministic: tau0 from the histogram minimum, T_b
/// from the dip half-width, bunching scales from decade-spaced wing lags.
HbtFit fit_hbt(const Histogram& hist, double irf_fwhm_ps);

struct HomFit {
  FitResult fit_cross;
  FitResult fit_co;
  HomFitParams params;
  ValueWithSigma v_raw;
  ValueWithSigma v_decon;
  ValueWithSigma g2_par0_raw, g2_perp0_raw;
  ValueWithSigma g2_par0_decon, g2_perp0_decon;
  double dip_full_width_ns{0.0};  // 2 t_dip
};

/// Fits cross- then co-polarized histograms (co shares the cross base
/// parameters). Visibilities V = 1 - g2_par(0)/g2_perp(0) are evaluated with
/// the bunching amplitudes zeroed; errors propagate through the quotient.
/// tie_dip_to_tb locks the dip timescale to the fitted T_b.
HomFit fit_hom(const Histogram& hist_co, const Histogram& hist_cross, double irf_fwhm_ps,
               double delta_t_ns = 14.3, bool tie_dip_to_tb = false);

/// Visibility arithmetic with quotient-rule error propagation. Throws
/// DomainError when g2_perp0 is consistent with zero.
ValueWithSigma hom_visibility(double g2_par0, double g2_perp0, double sigma_par = 0.0,
                              double sigma_perp = 0.0);

struct TcspcFit {
  FitResult fit;
  TcspcFitParams params;
  CoherenceSummary summary;  // Fourier-limited values derived from tau1
  bool mono_fallback{false};
};

/// Decay curve fit; x in ns, y in counts. Falls back to a mono-exponential
/// when the second component is unidentifiable (ratio error above 100%).
TcspcFit fit_tcspc(const XySeries& decay);

struct ScanFit {
  FitResult fit;
  VoigtParams params;
  ValueWithSigma fwhm_ghz;
};

/// Voigt fit of a resonance scan; x in GHz, y in counts.
ScanFit fit_scan(const XySeries& scan);

struct MiFit {
  FitResult fit;
  VoigtParams params;
  ValueWithSigma fwhm_ghz;
  ValueWithSigma t2_ns;
};

/// Fit of Michelson fringe visibility with the Fourier transform of a Voigt
/// profile; x in ps, y dimensionless visibility.
MiFit fit_mi(const XySeries& visibility);

}  // namespace qcw
