#include "qcw/emitter.hpp"

#include <algorithm>
#include <cmath>

#include "qcw/random.hpp"

namespace qcw {

namespace {

constexpr double kPsPerNs = 1000.0;

// Exact conditional update of a stationary OU process over a time step.
class OuProcess {
public:
  OuProcess(double sigma, double corr_time_ns, Rng& rng) : sigma_(sigma), tau_(corr_time_ns) {
    value_ = sigma_ > 0.0 ? rng.normal(0.0, sigma_) : 0.0;
  }

  double advance(double dt_ns, Rng& rng) {
    if (sigma_ <= 0.0) return 0.0;
    const double rho = std::exp(-dt_ns / tau_);
    value_ = value_ * rho + sigma_ * std::sqrt(std::max(1.0 - rho * rho, 0.0)) * rng.normal();
    return value_;
  }

  double value() const { return value_; }

private:
  double sigma_;
  double tau_;
  double value_;
};

enum class Level { G, X, XX };

struct IdealTag {
  std::int32_t channel;
  double t_ps;
};

// Detection effects on pre-routed clicks: thinning, jitter, dark counts,
// per-channel dead time. Sorting is global by timestamp; per-channel order
// follows.
TagStream detect(std::vector<IdealTag> clicks, double duration_ns, const DetectionConfig& det,
                 std::int32_t n_channels, Rng& rng) {
  validate(det);
  std::vector<IdealTag> kept;
  kept.reserve(clicks.size());
  for (const IdealTag& click : clicks) {
    if (det.efficiency < 1.0 && !rng.bernoulli(det.efficiency)) continue;
    double t = click.t_ps;
    if (det.jitter_sigma_ps > 0.0) t += rng.normal(0.0, det.jitter_sigma_ps);
    if (t < 0.0) t = 0.0;
    kept.push_back({click.channel, t});
  }
  if (det.dark_rate_per_ns > 0.0) {
    const double mean = det.dark_rate_per_ns * duration_ns;
    for (std::int32_t ch = 0; ch < n_channels; ++ch) {
      const std::uint64_t n_dark = rng.poisson(mean);
      for (std::uint64_t i = 0; i < n_dark; ++i)
        kept.push_back({ch, rng.uniform() * duration_ns * kPsPerNs});
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const IdealTag& a, const IdealTag& b) { return a.t_ps < b.t_ps; });

  TagStream stream;
  stream.n_channels = n_channels;
  stream.duration_ps = static_cast<TimestampPs>(std::llround(duration_ns * kPsPerNs));
  stream.tags.reserve(kept.size());
  std::vector<double> last(static_cast<std::size_t>(n_channels),
                           -std::numeric_limits<double>::infinity());
  for (const IdealTag& click : kept) {
    auto& prev = last[static_cast<std::size_t>(click.channel)];
    if (det.dead_time_ps > 0.0 && click.t_ps - prev < det.dead_time_ps) continue;
    prev = click.t_ps;
    stream.tags.push_back({click.channel, static_cast<TimestampPs>(std::llround(click.t_ps))});
  }
  return stream;
}

}  // namespace

double jitter_sigma_for_irf_fwhm(double irf_fwhm_ps) {
  return gaussian_sigma_from_fwhm(irf_fwhm_ps) / std::sqrt(2.0);
}

void validate(const EmitterConfig& cfg) {
  if (!(cfg.t1_x_ns > 0.0) || !(cfg.t1_xx_ns > 0.0))
    throw DomainError("emitter: lifetimes must be positive");
  if (cfg.pump_rate_per_ns < 0.0) throw DomainError("emitter: pump rate must be non-negative");
  if (cfg.pure_dephasing_rate_per_ns < 0.0)
    throw DomainError("emitter: dephasing rate must be non-negative");
  for (const auto& blinker : cfg.blinkers) {
    if (blinker.on_rate_per_ns < 0.0 || blinker.off_rate_per_ns < 0.0)
      throw DomainError("emitter: blinker rates must be non-negative");
    if (blinker.on_rate_per_ns + blinker.off_rate_per_ns <= 0.0)
      throw DomainError("emitter: blinker with zero switching rates");
  }
  const auto& sd = cfg.spectral_diffusion;
  if (sd.sigma_rad_s < 0.0) throw DomainError("emitter: OU sigma must be non-negative");
  if (sd.sigma_rad_s > 0.0 && !(sd.corr_time_ns > 0.0))
    throw DomainError("emitter: OU correlation time must be positive when sigma > 0");
}

void validate(const DetectionConfig& det) {
  if (!(det.efficiency > 0.0) || det.efficiency > 1.0)
    throw DomainError("detection: efficiency must be in (0, 1]");
  if (det.jitter_sigma_ps < 0.0 || det.dead_time_ps < 0.0 || det.dark_rate_per_ns < 0.0)
    throw DomainError("detection: jitter, dead time and dark rate must be non-negative");
}

std::vector<PhotonRecord> simulate_stream(const EmitterConfig& cfg, double duration_ns,
                                          std::uint64_t seed) {
  validate(cfg);
  if (!(duration_ns > 0.0)) throw DomainError("simulate_stream: duration must be positive");

  double toggle_rate = 0.0;
  for (const auto& blinker : cfg.blinkers)
    toggle_rate += std::max(blinker.on_rate_per_ns, blinker.off_rate_per_ns);
  const double decay_rate = 1.0 / cfg.t1_x_ns +
                            (cfg.mode == EmitterMode::cascade ? 1.0 / cfg.t1_xx_ns : 0.0);
  const double expected_events =
      duration_ns * (cfg.pump_rate_per_ns + toggle_rate + decay_rate);
  if (expected_events > 1e9)
    throw ResourceError("simulate_stream: expected event count exceeds 1e9");

  Rng rng(seed);
  OuProcess ou(cfg.spectral_diffusion.sigma_rad_s, cfg.spectral_diffusion.corr_time_ns, rng);
  double t_ou = 0.0;  // last OU update time

  // blinkers start in their stationary distribution
  std::vector<bool> on(cfg.blinkers.size());
  std::size_t n_off = 0;
  for (std::size_t i = 0; i < cfg.blinkers.size(); ++i) {
    const auto& blinker = cfg.blinkers[i];
    const double p_on = blinker.on_rate_per_ns / (blinker.on_rate_per_ns + blinker.off_rate_per_ns);
    on[i] = rng.bernoulli(p_on);
    if (!on[i]) ++n_off;
  }

  const double clip = 10.0 * cfg.spectral_diffusion.sigma_rad_s;
  std::vector<PhotonRecord> photons;
  Level level = Level::G;
  double t = 0.0;
  TimestampPs last_emit_ps = -1;

  std::vector<double> rates;
  while (true) {
    rates.clear();
    const bool pump_active = level == Level::G && n_off == 0 && cfg.pump_rate_per_ns > 0.0;
    rates.push_back(pump_active ? cfg.pump_rate_per_ns : 0.0);
    rates.push_back(level == Level::X ? 1.0 / cfg.t1_x_ns : 0.0);
    rates.push_back(level == Level::XX ? 1.0 / cfg.t1_xx_ns : 0.0);
    for (std::size_t i = 0; i < cfg.blinkers.size(); ++i)
      rates.push_back(on[i] ? cfg.blinkers[i].off_rate_per_ns : cfg.blinkers[i].on_rate_per_ns);

    double total = 0.0;
    for (double rate : rates) total += rate;
    if (total <= 0.0) break;

    t += rng.exponential(total);
    if (t >= duration_ns) break;

    double pick = rng.uniform() * total;
    std::size_t event = 0;
    while (event + 1 < rates.size() && pick >= rates[event]) {
      pick -= rates[event];
      ++event;
    }

    const auto emit = [&](Transition transition) {
      double detuning = ou.advance(t - t_ou, rng);
      t_ou = t;
      detuning = std::clamp(detuning, -clip, clip);
      TimestampPs t_ps = static_cast<TimestampPs>(std::llround(t * kPsPerNs));
      if (t_ps <= last_emit_ps) t_ps = last_emit_ps + 1;  // keep t_emit strictly increasing
      last_emit_ps = t_ps;
      photons.push_back({t_ps, transition, detuning, Polarization::H});
    };

    switch (event) {
      case 0:  // pump from the ground state
        level = cfg.mode == EmitterMode::cascade ? Level::XX : Level::X;
        break;
      case 1:  // X -> G
        emit(Transition::X);
        level = Level::G;
        break;
      case 2:  // XX -> X
        emit(Transition::XX);
        level = Level::X;
        break;
      default: {
        const std::size_t i = event - 3;
        on[i] = !on[i];
        n_off += on[i] ? -1 : 1;
        break;
      }
    }
  }
  // a cascade interrupted by the end of acquisition would leave an XX photon
  // without its X partner; drop it so the pair bookkeeping stays exact
  if (cfg.mode == EmitterMode::cascade && level == Level::X && !photons.empty() &&
      photons.back().transition == Transition::XX)
    photons.pop_back();
  return photons;
}

TagStream apply_detection(const std::vector<PhotonRecord>& photons, double duration_ns,
                          const DetectionConfig& det, const ChannelRouting& routing,
                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<IdealTag> clicks;
  clicks.reserve(photons.size());
  for (const PhotonRecord& photon : photons) {
    std::int32_t channel = routing.channel_a;
    switch (routing.kind) {
      case RoutingKind::beamsplitter:
        channel = rng.bernoulli(0.5) ? routing.channel_a : routing.channel_b;
        break;
      case RoutingKind::by_transition:
        channel = photon.transition == Transition::XX ? routing.channel_b : routing.channel_a;
        break;
      case RoutingKind::single_channel:
        break;
    }
    clicks.push_back({channel, static_cast<double>(photon.t_emit)});
  }
  return detect(std::move(clicks), duration_ns, det, routing.n_channels(), rng);
}

std::vector<VisibilityPoint> simulate_mi_visibility(const EmitterConfig& cfg,
                                                    const std::vector<double>& delays_ps,
                                                    std::uint64_t seed, const MiOptions& options) {
  validate(cfg);
  if (cfg.mode != EmitterMode::two_level)
    throw DomainError("simulate_mi_visibility: requires two_level mode");

  const double sigma = cfg.spectral_diffusion.sigma_rad_s * 1e-9;  // rad/ns
  const double corr = cfg.spectral_diffusion.corr_time_ns;
  const double gamma_deph = cfg.pure_dephasing_rate_per_ns;

  std::vector<VisibilityPoint> points(delays_ps.size());
  for (std::size_t k = 0; k < delays_ps.size(); ++k) {
    Rng rng = Rng::derived(seed, k);
    const double tau_ns = std::abs(delays_ps[k]) * 1e-3;
    const double envelope = std::exp(-tau_ns / (2.0 * cfg.t1_x_ns));

    double sum_re = 0.0, sum_im = 0.0;
    const int n = options.samples_per_delay;
    if (tau_ns == 0.0 || (sigma == 0.0 && gamma_deph == 0.0)) {
      sum_re = n;  // phase is identically zero
    } else {
      const int steps = sigma > 0.0
                            ? std::max(16, static_cast<int>(std::ceil(tau_ns / (corr / 64.0))))
                            : 1;
      const double dt = tau_ns / steps;
      for (int s = 0; s < n; ++s) {
        double phase = 0.0;
        if (sigma > 0.0) {
          OuProcess ou(sigma, corr, rng);
          double prev = ou.value();
          for (int j = 0; j < steps; ++j) {
            const double next = ou.advance(dt, rng);
            phase += 0.5 * (prev + next) * dt;
            prev = next;
          }
        }
        if (gamma_deph > 0.0) phase += rng.normal(0.0, std::sqrt(2.0 * gamma_deph * tau_ns));
        sum_re += std::cos(phase);
        sum_im += std::sin(phase);
      }
    }
    const double mre = sum_re / n;
    const double mim = sum_im / n;
    const double mean_phasor = std::sqrt(mre * mre + mim * mim);
    VisibilityPoint& point = points[k];
    point.delay_ps = delays_ps[k];
    point.visibility = envelope * mean_phasor;
    const double se = std::sqrt(std::max(1.0 - mean_phasor * mean_phasor, 0.0) / (2.0 * n));
    point.std_error = envelope * se;
    point.low_confidence = mean_phasor > 0.0 && se / mean_phasor > 0.05;
  }
  return points;
}

std::vector<double> simulate_rf_scan(const EmitterConfig& cfg,
                                     const std::vector<double>& detunings_ghz,
                                     std::uint64_t seed, const RfScanOptions& options) {
  validate(cfg);
  if (cfg.mode != EmitterMode::two_level)
    throw DomainError("simulate_rf_scan: requires two_level mode");

  const double gamma1 = 1.0 / cfg.t1_x_ns;                          // 1/ns
  const double gamma2 = 0.5 * gamma1 + cfg.pure_dephasing_rate_per_ns;  // 1/ns
  const double omega = options.rabi_rad_per_ns > 0.0 ? options.rabi_rad_per_ns : gamma2 / 5.0;
  const double sigma = cfg.spectral_diffusion.sigma_rad_s * 1e-9;  // rad/ns

  // steady-state excited population of the driven two-level system
  const auto population = [&](double delta_rad_ns) {
    const double num = 0.5 * omega * omega * gamma2;
    const double den = gamma1 * (delta_rad_ns * delta_rad_ns + gamma2 * gamma2) +
                       omega * omega * gamma2;
    return num / den;
  };
  const double peak = population(0.0);

  Rng rng(seed);
  // one shared batch of stationary OU draws for the whole scan: the line
  // wanders identically under every scan point, so symmetric grids stay
  // exactly symmetric and the per-point estimates share their variance
  std::vector<double> offsets;
  if (sigma > 0.0) {
    // antithetic +-x pairs: detuning-symmetric by construction
    const std::size_t n_pairs = static_cast<std::size_t>(std::max(options.ou_samples / 2, 1));
    offsets.reserve(2 * n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
      const double x = rng.normal(0.0, sigma);
      offsets.push_back(x);
      offsets.push_back(-x);
    }
  }
  std::vector<double> counts(detunings_ghz.size());
  for (std::size_t k = 0; k < detunings_ghz.size(); ++k) {
    const double delta0 = 2.0 * kPi * detunings_ghz[k];  // rad/ns
    double mean = 0.0;
    if (!offsets.empty()) {
      for (const double x : offsets) mean += population(delta0 - x);
      mean /= static_cast<double>(offsets.size());
    } else {
      mean = population(delta0);
    }
    const double expected = options.peak_counts * mean / peak;
    counts[k] = options.poisson_noise ? static_cast<double>(rng.poisson(expected)) : expected;
  }
  return counts;
}

double hom_pair_overlap(double tau_d_ns, double delta_omega_rad_per_ns, double t1_ns,
                        double t2_ns) {
  const double indistinguishability = t2_ns / (2.0 * t1_ns);
  const double temporal = std::exp(-std::abs(tau_d_ns) / t1_ns);
  const double spectral = 1.0 / (1.0 + delta_omega_rad_per_ns * t1_ns * delta_omega_rad_per_ns * t1_ns);
  return indistinguishability * temporal * spectral;
}

HomResult simulate_hom(const std::vector<PhotonRecord>& photons, const EmitterConfig& cfg,
                       double duration_ns, double delta_t_ns, HomPolarization pol,
                       const DetectionConfig& det, std::uint64_t seed) {
  validate(cfg);
  if (!(delta_t_ns > 0.0)) throw DomainError("simulate_hom: delta_t must be positive");

  const Transition line = cfg.mode == EmitterMode::cascade ? Transition::XX : Transition::X;
  const double t1 = cfg.mode == EmitterMode::cascade ? cfg.t1_xx_ns : cfg.t1_x_ns;
  const double t2 = cfg.t2_ns(t1);

  HomResult result;
  result.short_delay_warning = delta_t_ns < 2.0 * t1;

  Rng rng(seed);
  struct Arrival {
    double t_ps;
    double detuning_rad_s;
    bool long_arm;
  };
  std::vector<Arrival> arrivals;
  arrivals.reserve(photons.size());
  const double delta_t_ps = delta_t_ns * kPsPerNs;
  for (const PhotonRecord& photon : photons) {
    if (photon.transition != line) continue;
    const bool long_arm = rng.bernoulli(0.5);
    arrivals.push_back({static_cast<double>(photon.t_emit) + (long_arm ? delta_t_ps : 0.0),
                        photon.detuning_rad_s, long_arm});
  }
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const Arrival& x, const Arrival& y) { return x.t_ps < y.t_ps; });

  // pair only photons whose wavepackets genuinely overlap: a wider window
  // lets an intervening arrival steal the partner of a near-coincident pair,
  // which dilutes the interference dip
  const double window_ps = std::min(2.0 * t1, 0.25 * delta_t_ns) * kPsPerNs;
  std::vector<IdealTag> clicks;
  clicks.reserve(arrivals.size());

  // match partners smallest arrival gap first: the pair with the strongest
  // wavepacket overlap interferes, instead of whichever photon happened to
  // arrive just before
  std::vector<std::pair<double, std::size_t>> gaps;
  for (std::size_t i = 0; i + 1 < arrivals.size(); ++i) {
    const double gap = arrivals[i + 1].t_ps - arrivals[i].t_ps;
    if (gap <= window_ps) gaps.push_back({gap, i});
  }
  std::stable_sort(gaps.begin(), gaps.end());
  std::vector<std::uint8_t> state(arrivals.size(), 0);  // 0 free, 1 pair-start, 2 pair-end
  for (const auto& [gap, i] : gaps) {
    if (state[i] == 0 && state[i + 1] == 0) {
      state[i] = 1;
      state[i + 1] = 2;
      result.pairs_formed += 1;
    }
  }

  // outcomes drawn in arrival order so the stream is reproducible
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    if (state[i] == 2) continue;  // handled with its partner
    if (state[i] == 1) {
      const Arrival& first = arrivals[i];
      const Arrival& second = arrivals[i + 1];
      double overlap = 0.0;
      if (pol == HomPolarization::co && first.long_arm != second.long_arm) {
        const double tau_d_ns = (second.t_ps - first.t_ps) / kPsPerNs;
        const double d_omega = (second.detuning_rad_s - first.detuning_rad_s) * 1e-9;
        overlap = hom_pair_overlap(tau_d_ns, d_omega, t1, t2);
      }
      const double p_split = 0.5 * (1.0 - overlap);
      if (rng.uniform() < p_split) {
        const bool swap = rng.bernoulli(0.5);
        clicks.push_back({swap ? 1 : 0, first.t_ps});
        clicks.push_back({swap ? 0 : 1, second.t_ps});
      } else {
        const std::int32_t port = rng.bernoulli(0.5) ? 1 : 0;
        clicks.push_back({port, first.t_ps});
        clicks.push_back({port, second.t_ps});
      }
    } else {
      clicks.push_back({rng.bernoulli(0.5) ? 0 : 1, arrivals[i].t_ps});
    }
  }

  const double duration_out_ns = duration_ns + delta_t_ns;
  result.tags = detect(std::move(clicks), duration_out_ns, det, 2, rng);
  return result;
}

std::vector<double> ou_path(double sigma, double corr_time_ns, double dt_ns, std::size_t n,
                            std::uint64_t seed) {
  Rng rng(seed);
  OuProcess ou(sigma, corr_time_ns, rng);
  std::vector<double> path(n);
  if (n == 0) return path;
  path[0] = ou.value();
  for (std::size_t i = 1; i < n; ++i) path[i] = ou.advance(dt_ns, rng);
  return path;
}

}  // namespace qcw
