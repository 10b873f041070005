#pragma once

#include <vector>

#include "qcw/types.hpp"

// Kinetic Monte Carlo simulation of a cw-driven emitter: exciton/biexciton
// levels, multi-timescale blinking gates on the pump, Ornstein-Uhlenbeck
// spectral diffusion and detection imperfections. Every operation is
// deterministic for a fixed seed.

namespace qcw {

/// One telegraph blinking process. on_rate is the off->on switching rate,
/// off_rate the on->off rate, so the stationary on-fraction is
/// on_rate / (on_rate + off_rate) and the correlation time 1/(on+off).
struct TelegraphConfig {
  double on_rate_per_ns{0.0};
  double off_rate_per_ns{0.0};
};

/// Stationary OU process: sigma is the rms angular detuning, corr_time the
/// exponential correlation time of the wandering line center.
struct SpectralDiffusionConfig {
  double sigma_rad_s{0.0};
  double corr_time_ns{1.0};
};

enum class EmitterMode { two_level, cascade };

struct EmitterConfig {
  double t1_x_ns{1.71};
  double t1_xx_ns{0.8};
  double pump_rate_per_ns{0.2};
  std::vector<TelegraphConfig> blinkers;
  SpectralDiffusionConfig spectral_diffusion;
  double pure_dephasing_rate_per_ns{0.0};
  EmitterMode mode{EmitterMode::two_level};

  /// 1/T2 = 1/(2 T1) + gamma_deph for the given transition lifetime.
  double t2_ns(double t1_ns) const {
    return 1.0 / (0.5 / t1_ns + pure_dephasing_rate_per_ns);
  }
};

struct DetectionConfig {
  double efficiency{1.0};
  double jitter_sigma_ps{0.0};  // per-detector Gaussian timing jitter
  double dead_time_ps{0.0};
  double dark_rate_per_ns{0.0};  // per channel
};

/// Per-detector jitter sigma that makes the two-detector coincidence
/// response a Gaussian of the given FWHM.
double jitter_sigma_for_irf_fwhm(double irf_fwhm_ps);

enum class RoutingKind {
  beamsplitter,    // 50/50 split onto channel_a / channel_b
  by_transition,   // X -> channel_a, XX -> channel_b
  single_channel,  // everything onto channel_a
};

struct ChannelRouting {
  RoutingKind kind{RoutingKind::beamsplitter};
  std::int32_t channel_a{0};
  std::int32_t channel_b{1};

  std::int32_t n_channels() const {
    return kind == RoutingKind::single_channel ? channel_a + 1
                                               : std::max(channel_a, channel_b) + 1;
  }
};

void validate(const EmitterConfig& cfg);
void validate(const DetectionConfig& det);

/// Event-driven simulation of the level system gated by the blinkers.
/// Photons carry the instantaneous OU detuning at emission time.
/// Throws ResourceError when the expected event count exceeds 1e9.
std::vector<PhotonRecord> simulate_stream(const EmitterConfig& cfg, double duration_ns,
                                          std::uint64_t seed);

/// Detector chain: efficiency thinning, Gaussian jitter, per-channel dead
/// time and Poissonian dark counts. Returns a per-channel sorted stream.
TagStream apply_detection(const std::vector<PhotonRecord>& photons, double duration_ns,
                          const DetectionConfig& det, const ChannelRouting& routing,
                          std::uint64_t seed);

struct VisibilityPoint {
  double delay_ps{0.0};
  double visibility{0.0};
  double std_error{0.0};
  bool low_confidence{false};  // set when the MC relative error exceeds 5%
};

struct MiOptions {
  int samples_per_delay{4000};
};

/// Monte Carlo |g1(tau)| for a Michelson visibility measurement: lifetime
/// envelope exp(-|tau| / (2 T1)) times the sampled mean phasor of the
/// accumulated OU + pure-dephasing phase.
std::vector<VisibilityPoint> simulate_mi_visibility(const EmitterConfig& cfg,
                                                    const std::vector<double>& delays_ps,
                                                    std::uint64_t seed, const MiOptions& = {});

struct RfScanOptions {
  double rabi_rad_per_ns{0.0};  // 0 picks a weak drive fixed at gamma2 / 5
  double peak_counts{1e4};
  int ou_samples{400};
  bool poisson_noise{true};
};

/// Steady-state RF scan: excited population averaged over OU detuning draws
/// per laser detuning, scaled to counts (optionally Poisson sampled).
std::vector<double> simulate_rf_scan(const EmitterConfig& cfg,
                                     const std::vector<double>& detunings_ghz,
                                     std::uint64_t seed, const RfScanOptions& = {});

/// Wavepacket overlap of two exponential photons meeting at a beamsplitter:
/// [T2/(2 T1)] * exp(-|tau_d|/T1) / (1 + (delta_omega * T1)^2).
double hom_pair_overlap(double tau_d_ns, double delta_omega_rad_per_ns, double t1_ns,
                        double t2_ns);

struct HomResult {
  TagStream tags;
  bool short_delay_warning{false};  // delta_t below ~2 T1: unpaired overlap
  std::uint64_t pairs_formed{0};
};

/// Unbalanced Mach-Zehnder HOM experiment at the pair-probability level.
/// Photons route randomly through the short/long arm (long adds delta_t);
/// pairs meeting at the output splitter within the coincidence window
/// anti-coalesce with probability (1 - V_pair)/2 when co-polarized and from
/// different arms, 1/2 otherwise. Output ports are channels 0/1.
HomResult simulate_hom(const std::vector<PhotonRecord>& photons, const EmitterConfig& cfg,
                       double duration_ns, double delta_t_ns, HomPolarization pol,
                       const DetectionConfig& det, std::uint64_t seed);

/// Stationary OU path sampled at fixed dt; diagnostic surface for tests.
std::vector<double> ou_path(double sigma, double corr_time_ns, double dt_ns, std::size_t n,
                            std::uint64_t seed);

}  // namespace qcw
