#include "qcw/bloch.hpp"

#include <algorithm>
#include <cmath>

#include "qcw/nlls.hpp"

namespace qcw {

namespace {

// Rabi envelope Omega(t) in rad/ps, normalized so its time integral is the
// pulse area. t = 0 is the pulse center.
struct Envelope {
  PulseEnvelope shape;
  double fwhm_ps;
  double area;

  double operator()(double t_ps) const {
    if (shape == PulseEnvelope::square) {
      return std::abs(t_ps) <= 0.5 * fwhm_ps ? area / fwhm_ps : 0.0;
    }
    const double sigma = gaussian_sigma_from_fwhm(fwhm_ps);
    const double u = t_ps / sigma;
    return area / (sigma * std::sqrt(2.0 * kPi)) * std::exp(-0.5 * u * u);
  }

  double peak() const {
    if (shape == PulseEnvelope::square) return area / fwhm_ps;
    return area / (gaussian_sigma_from_fwhm(fwhm_ps) * std::sqrt(2.0 * kPi));
  }
};

struct State4 {
  double pe, pg, cr, ci;
};

struct Rates {
  double g1_ps;       // radiative decay
  double gloss_ps;    // drive-induced loss at the peak of a pi pulse
  double gdeph_ps;    // pure dephasing
  double det_ps;      // detuning, rad/ps
  double omega_pi_pk;  // peak Rabi frequency of a pi pulse, rad/ps
};

State4 deriv(const State4& s, double omega, const Rates& r) {
  // d pe/dt = Omega Im(c) - (G_rad + G_loss(t)) pe
  // d pg/dt = -Omega Im(c) + G_rad pe
  // d c/dt  = -i Omega/2 (pe - pg) - i Delta c - gamma2 c,   c = rho_ge
  const double drive = omega / r.omega_pi_pk;
  const double gloss = r.gloss_ps * drive * drive;
  const double g2 = 0.5 * (r.g1_ps + gloss) + r.gdeph_ps;
  State4 d;
  d.pe = omega * s.ci - (r.g1_ps + gloss) * s.pe;
  d.pg = -omega * s.ci + r.g1_ps * s.pe;
  d.cr = r.det_ps * s.ci - g2 * s.cr;
  d.ci = -0.5 * omega * (s.pe - s.pg) - r.det_ps * s.cr - g2 * s.ci;
  return d;
}

BlochState integrate(const BlochState& s0, const PulseConfig& pulse, const DecayConfig& decay,
                     double dt_ps, std::vector<BlochSample>* trajectory) {
  if (!(pulse.duration_fwhm_ps > 0.0)) throw DomainError("evolve: pulse duration must be positive");
  if (pulse.area_rad < 0.0) throw DomainError("evolve: pulse area must be non-negative");
  if (!(dt_ps > 0.0) || dt_ps > pulse.duration_fwhm_ps / 50.0)
    throw DomainError("evolve: dt must be positive and at most duration_fwhm/50");
  if (decay.gamma_rad_per_ns < 0.0 || decay.gamma_deph_per_ns < 0.0 ||
      decay.gamma_loss_per_ns < 0.0)
    throw DomainError("evolve: decay rates must be non-negative");

  const Envelope envelope{pulse.envelope, pulse.duration_fwhm_ps, pulse.area_rad};
  Rates rates;
  rates.g1_ps = decay.gamma_rad_per_ns * 1e-3;
  rates.gloss_ps = decay.gamma_loss_per_ns * 1e-3;
  rates.gdeph_ps = decay.gamma_deph_per_ns * 1e-3;
  rates.det_ps = pulse.detuning_rad_ns * 1e-3;
  rates.omega_pi_pk = Envelope{pulse.envelope, pulse.duration_fwhm_ps, kPi}.peak();

  const double t_start = -4.0 * pulse.duration_fwhm_ps;
  const double t_end = 4.0 * pulse.duration_fwhm_ps;

  State4 s{s0.population_e, s0.population_g, s0.coherence_re, s0.coherence_im};
  if (trajectory) {
    trajectory->clear();
    trajectory->push_back({t_start, s0});
  }

  // fixed_omega >= 0 overrides the envelope (constant-drive intervals of a
  // square pulse); pass -1 to sample the envelope
  const auto run_interval = [&](double a, double b, double fixed_omega) {
    if (b <= a) return;
    const auto n_steps = static_cast<std::size_t>(std::ceil((b - a) / dt_ps));
    const double dt = (b - a) / static_cast<double>(n_steps);
    for (std::size_t step = 0; step < n_steps; ++step) {
      const double t = a + static_cast<double>(step) * dt;
      const double om1 = fixed_omega >= 0.0 ? fixed_omega : envelope(t);
      const double om2 = fixed_omega >= 0.0 ? fixed_omega : envelope(t + 0.5 * dt);
      const double om3 = fixed_omega >= 0.0 ? fixed_omega : envelope(t + dt);

      const State4 k1 = deriv(s, om1, rates);
      const State4 s2{s.pe + 0.5 * dt * k1.pe, s.pg + 0.5 * dt * k1.pg, s.cr + 0.5 * dt * k1.cr,
                      s.ci + 0.5 * dt * k1.ci};
      const State4 k2 = deriv(s2, om2, rates);
      const State4 s3{s.pe + 0.5 * dt * k2.pe, s.pg + 0.5 * dt * k2.pg, s.cr + 0.5 * dt * k2.cr,
                      s.ci + 0.5 * dt * k2.ci};
      const State4 k3 = deriv(s3, om2, rates);
      const State4 s4{s.pe + dt * k3.pe, s.pg + dt * k3.pg, s.cr + dt * k3.cr, s.ci + dt * k3.ci};
      const State4 k4 = deriv(s4, om3, rates);

      s.pe += dt / 6.0 * (k1.pe + 2.0 * k2.pe + 2.0 * k3.pe + k4.pe);
      s.pg += dt / 6.0 * (k1.pg + 2.0 * k2.pg + 2.0 * k3.pg + k4.pg);
      s.cr += dt / 6.0 * (k1.cr + 2.0 * k2.cr + 2.0 * k3.cr + k4.cr);
      s.ci += dt / 6.0 * (k1.ci + 2.0 * k2.ci + 2.0 * k3.ci + k4.ci);

      if (s.pe < -1e-6 || s.pe > 1.0 + 1e-6)
        throw IntegratorError("evolve: population left [0,1]; reduce dt");
      if (trajectory) trajectory->push_back({t + dt, BlochState{s.pe, s.pg, s.cr, s.ci}});
    }
  };

  if (pulse.envelope == PulseEnvelope::square) {
    // keep the envelope discontinuities on interval boundaries; the stage
    // at the edge itself belongs to the on-interval, where the half-open
    // midpoints never straddle the jump
    const double half = 0.5 * pulse.duration_fwhm_ps;
    run_interval(t_start, -half, 0.0);
    run_interval(-half, half, pulse.area_rad / pulse.duration_fwhm_ps);
    run_interval(half, t_end, 0.0);
  } else {
    run_interval(t_start, t_end, -1.0);
  }
  return BlochState{s.pe, s.pg, s.cr, s.ci};
}

// step refinement for internal sweeps: resolve both the rotation per step
// (area / pi) and the fastest damping rate so RK4 stays in its stability
// region even while a fit explores extreme rates
double safe_dt(double dt_base, double area, const DecayConfig& decay) {
  const double drive_sq = std::max(area / kPi, 1.0) * std::max(area / kPi, 1.0);
  const double rate_ps = (decay.gamma_rad_per_ns + decay.gamma_deph_per_ns +
                          decay.gamma_loss_per_ns * drive_sq) *
                         1e-3;
  double scale = std::max(1.0, area / kPi);
  scale = std::max(scale, 5.0 * rate_ps * dt_base);
  return dt_base / scale;
}

}  // namespace

std::vector<BlochSample> evolve(const BlochState& s0, const PulseConfig& pulse,
                                const DecayConfig& decay, double dt_ps) {
  std::vector<BlochSample> trajectory;
  integrate(s0, pulse, decay, dt_ps, &trajectory);
  return trajectory;
}

std::vector<double> rabi_curve(const std::vector<double>& areas_rad,
                               const PulseConfig& pulse_shape, const DecayConfig& decay,
                               double dt_ps) {
  if (!std::is_sorted(areas_rad.begin(), areas_rad.end()))
    throw DomainError("rabi_curve: areas must be sorted ascending");
  const double dt_base = dt_ps > 0.0 ? dt_ps : pulse_shape.duration_fwhm_ps / 60.0;
  std::vector<double> populations;
  populations.reserve(areas_rad.size());
  for (const double area : areas_rad) {
    PulseConfig pulse = pulse_shape;
    pulse.area_rad = area;
    const double dt = safe_dt(dt_base, area, decay);
    populations.push_back(integrate(BlochState{}, pulse, decay, dt, nullptr).population_e);
  }
  return populations;
}

double prep_fidelity(const std::vector<double>& curve) {
  if (curve.size() < 3) throw DomainError("prep_fidelity: need at least 3 points");
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    if (curve[i] > curve[i - 1] && curve[i] >= curve[i + 1]) {
      // parabolic refinement through the three points around the maximum
      const double ym = curve[i - 1], y0 = curve[i], yp = curve[i + 1];
      const double denom = ym - 2.0 * y0 + yp;
      double value = y0;
      if (denom < 0.0) {
        const double delta = 0.5 * (ym - yp) / denom;
        if (std::abs(delta) <= 1.0) value = y0 - 0.25 * (ym - yp) * delta;
      }
      return std::clamp(value, 0.0, 1.0);
    }
  }
  throw DomainError("prep_fidelity: curve has no interior maximum");
}

RabiFit fit_rabi(const std::vector<double>& sqrt_power, const std::vector<double>& intensity,
                 const PulseConfig& pulse_shape, bool fit_dephasing) {
  const std::size_t n = sqrt_power.size();
  if (n != intensity.size()) throw DomainError("fit_rabi: x/y length mismatch");
  if (n < 10) throw DomainError("fit_rabi: need at least 10 points");

  const double dt = pulse_shape.duration_fwhm_ps / 60.0;

  // init: first local maximum of lightly smoothed data marks the pi pulse
  std::vector<double> smooth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = intensity[i > 0 ? i - 1 : 0];
    const double b = intensity[i];
    const double c = intensity[i + 1 < n ? i + 1 : n - 1];
    smooth[i] = (a + b + c) / 3.0;
  }
  std::size_t peak = 0;
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1]) {
      peak = i;
      break;
    }
  const double max_intensity = *std::max_element(intensity.begin(), intensity.end());
  const double cal0 = peak > 0 && sqrt_power[peak] > 0.0
                          ? kPi / sqrt_power[peak]
                          : kPi / std::max(sqrt_power.back() / 2.0, 1e-12);
  const double amp0 = std::max(max_intensity, 1e-12) * 1.1;
  const double fwhm_ns = pulse_shape.duration_fwhm_ps * 1e-3;
  const double first_max_ratio = std::clamp(intensity[peak > 0 ? peak : n / 2] / amp0, 0.05, 1.0);
  // survival at the pi maximum ~ exp(-gamma_loss * 0.25 * fwhm) for the
  // intensity-scaled loss channel (effective exposure ~ fwhm/4)
  const double loss0 = std::max(-std::log(first_max_ratio) / (0.25 * fwhm_ns), 1e-3);

  const ModelFn model = [&pulse_shape, dt](double x, std::span<const double> p) {
    PulseConfig pulse = pulse_shape;
    pulse.area_rad = p[1] * x;
    DecayConfig decay;
    decay.gamma_loss_per_ns = p[2];
    decay.gamma_deph_per_ns = p[3];
    const double dt_area = safe_dt(dt, pulse.area_rad, decay);
    return p[0] * integrate(BlochState{}, pulse, decay, dt_area, nullptr).population_e;
  };

  // the likelihood has calibration-stretch local minima when the first
  // maximum is broad; a small deterministic start grid picks the global one
  const double start_grid[][2] = {
      {cal0, loss0}, {0.85 * cal0, 2.5 * loss0}, {1.2 * cal0, 0.4 * loss0}};
  std::vector<double> weights(n, 1.0);
  RabiFit out;
  bool have_fit = false;
  for (const auto& start : start_grid) {
    std::vector<ParamSpec> specs{
        ParamSpec::non_negative("amplitude", amp0),
        ParamSpec::non_negative("area_per_sqrt_power", start[0]),
        ParamSpec::bounded("gamma_loss_per_ns", start[1], 0.0, 5000.0),
        fit_dephasing ? ParamSpec::bounded("gamma_deph_per_ns", 1e-3, 0.0, 5000.0)
                      : ParamSpec::fixed_param("gamma_deph_per_ns", 0.0),
    };
    FitResult candidate;
    try {
      candidate = nlls_fit(model, sqrt_power, intensity, weights, std::move(specs));
    } catch (const DegenerateFitError&) {
      if (have_fit) continue;
      throw;
    }
    const bool better = !have_fit ||
                        (candidate.converged && !out.fit.converged) ||
                        (candidate.converged == out.fit.converged &&
                         candidate.chi2_red < out.fit.chi2_red);
    if (better) {
      out.fit = candidate;
      have_fit = true;
    }
  }
  out.fit.model = "rabi";

  // fidelity of the fitted configuration: first maximum of the bare
  // population curve on a dense area grid
  const auto fidelity_of = [&](std::span<const double> p) {
    DecayConfig decay;
    decay.gamma_loss_per_ns = std::max(p[2], 0.0);
    decay.gamma_deph_per_ns = std::max(p[3], 0.0);
    std::vector<double> areas;
    for (double a = 0.0; a <= 2.2 * kPi; a += kPi / 64.0) areas.push_back(a);
    return prep_fidelity(rabi_curve(areas, pulse_shape, decay, dt));
  };
  out.fidelity = fidelity_of(out.fit.values);

  // first-order error propagation over the decay parameters
  const std::size_t np = out.fit.names.size();
  std::vector<double> grad(np, 0.0);
  for (std::size_t j = 2; j < np; ++j) {
    if (out.fit.sigmas[j] == 0.0) continue;
    const double h = std::max(1e-4 * std::abs(out.fit.values[j]), 1e-6);
    std::vector<double> p_plus(out.fit.values), p_minus(out.fit.values);
    p_plus[j] += h;
    p_minus[j] = std::max(p_minus[j] - h, 0.0);
    grad[j] = (fidelity_of(p_plus) - fidelity_of(p_minus)) / (p_plus[j] - p_minus[j]);
  }
  double var = 0.0;
  for (std::size_t j = 0; j < np; ++j)
    for (std::size_t k = 0; k < np; ++k) var += grad[j] * out.fit.cov(j, k) * grad[k];
  out.fidelity_sigma = std::sqrt(std::max(var, 0.0));
  return out;
}

}  // namespace qcw
