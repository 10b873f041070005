#pragma once

#include <vector>

#include "qcw/types.hpp"

// Two-level optical Bloch equations with decay channels, driven by a single
// resonant (or detuned) pulse. Used for pulse-area sweeps producing damped
// Rabi oscillations and for fitting measured Rabi data.

namespace qcw {

/// Instantaneous state of the two-level system. population_g is tracked
/// separately because the loss channel removes population from the
/// {g, e} manifold entirely.
struct BlochState {
  double population_e{0.0};
  double population_g{1.0};
  double coherence_re{0.0};
  double coherence_im{0.0};
};

enum class PulseEnvelope { gaussian, square };

struct PulseConfig {
  PulseEnvelope envelope{PulseEnvelope::gaussian};
  double duration_fwhm_ps{10.0};
  double area_rad{kPi};       // Theta = integral of Omega(t) dt
  double detuning_rad_ns{0.0};  // laser detuning in rad/ns
};

struct DecayConfig {
  double gamma_rad_per_ns{0.0};   // radiative decay 1/T1
  double gamma_deph_per_ns{0.0};  // pure dephasing
  // Drive-induced population loss out of the {g, e} manifold. The rate
  // follows the instantaneous drive intensity,
  //   Gamma(t) = gamma_loss * (Omega(t) / Omega_pi_peak)^2,
  // normalized to the peak Rabi frequency of a pi pulse with the same
  // envelope, so gamma_loss is the loss rate at the top of a pi pulse.
  // A drive-independent rate would be indistinguishable from an overall
  // intensity scale in pulse-area sweeps; this form is identifiable.
  double gamma_loss_per_ns{0.0};
};

struct BlochSample {
  double t_ps;
  BlochState state;
};

/// Integrates the Bloch equations across a +-4 FWHM window around the pulse
/// with a fixed-step RK4 scheme. dt must be at most duration_fwhm / 50.
/// The coherence decays at gamma_rad/2 + gamma_loss/2 + gamma_deph (the loss
/// channel is a Lindblad jump out of the excited state, so positivity of the
/// density matrix forces the gamma_loss/2 term).
std::vector<BlochSample> evolve(const BlochState& s0, const PulseConfig& pulse,
                                const DecayConfig& decay, double dt_ps);

/// Final excited population for each pulse area, ascending areas required.
std::vector<double> rabi_curve(const std::vector<double>& areas_rad, const PulseConfig& pulse_shape,
                               const DecayConfig& decay, double dt_ps = 0.0);

/// Value of the first interior maximum of a population-vs-area curve
/// (the pi-pulse state-preparation fidelity). Throws DomainError when the
/// curve has no interior maximum.
double prep_fidelity(const std::vector<double>& curve);

struct RabiFit {
  FitResult fit;
  double fidelity{0.0};
  double fidelity_sigma{0.0};
};

/// Fits (sqrt-power, intensity) Rabi data with the Bloch solver as forward
/// model. Free parameters: amplitude scale, area-per-sqrt-power calibration,
/// gamma_loss, and optionally gamma_deph.
RabiFit fit_rabi(const std::vector<double>& sqrt_power, const std::vector<double>& intensity,
                 const PulseConfig& pulse_shape, bool fit_dephasing = false);

}  // namespace qcw
