#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Shared data model and unit conventions.
//
// Units, everywhere:
//   timestamps and delays at the tag level  -> integer picoseconds (int64)
//   linewidths and spectral offsets         -> GHz (ordinary frequency, not angular)
//   lifetimes, coherence times, rates       -> ns and 1/ns
//   instantaneous detunings in photon records and emitter configs -> rad/s (angular)
// Conversions happen at module boundaries, never implicitly inside a formula.

namespace qcw {

using TimestampPs = std::int64_t;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data; carries the offending source location when known.
class ParseError : public Error {
public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), path_(path), line_(line) {}
  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

private:
  std::string path_;
  std::size_t line_;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Parameter outside its mathematical domain (negative width, zero lifetime, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Fixed-step integration detected an unstable configuration.
class IntegratorError : public Error {
public:
  using Error::Error;
};

/// Sampled curve does not decay within its grid; integral would be truncated.
class TruncationError : public Error {
public:
  using Error::Error;
};

/// Simulation would generate an unreasonable number of events.
class ResourceError : public Error {
public:
  using Error::Error;
};

/// One detector click: channel id plus picosecond timestamp.
struct TimeTag {
  std::int32_t channel{0};
  TimestampPs t{0};

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// A tag stream with its acquisition header. Tags are sorted non-decreasing
/// in t within each channel (the global order is by timestamp for streams
/// produced here, but only per-channel order is guaranteed on read).
struct TagStream {
  std::int32_t n_channels{0};
  TimestampPs duration_ps{0};
  std::vector<TimeTag> tags;

  /// Timestamps of one channel, in stream order.
  std::vector<TimestampPs> channel_times(std::int32_t channel) const;
};

enum class Transition { X, XX, Xplus };
enum class Polarization { H, V };

/// Relative polarization of the two HOM interferometer arms.
enum class HomPolarization { co, cross };

std::string_view to_string(Transition t);
std::string_view to_string(Polarization p);

/// A simulated emitted photon, before any detection effects.
struct PhotonRecord {
  TimestampPs t_emit{0};
  Transition transition{Transition::X};
  double detuning_rad_s{0.0};  // instantaneous offset from nominal line center
  Polarization polarization{Polarization::H};
};

/// Per-stream metadata carried along with a correlation histogram.
struct HistogramMeta {
  std::uint64_t events_a{0};
  std::uint64_t events_b{0};
  TimestampPs duration_ps{0};
  std::int32_t channel_a{0};
  std::int32_t channel_b{1};
  std::string kind;  // free-form: "hbt", "hom_co", "hom_cross", ...
};

/// Delay histogram with an optional counts -> g2 normalization factor.
struct Histogram {
  std::int64_t bin_width_ps{1};
  std::int64_t tau_min_ps{0};
  std::vector<std::uint64_t> counts;
  double normalization{0.0};  // g2 = counts / normalization; 0 means not normalized
  HistogramMeta meta{};

  std::size_t size() const { return counts.size(); }
  std::int64_t tau_max_ps() const {
    return tau_min_ps + static_cast<std::int64_t>(counts.size()) * bin_width_ps;
  }
  /// Bin index for a delay, or nullopt when outside [tau_min, tau_max).
  std::optional<std::size_t> bin_index(std::int64_t tau_ps) const;
  /// Center of bin i in ps (exact when bin_width is even).
  double tau_center_ps(std::size_t i) const {
    return static_cast<double>(tau_min_ps) + (static_cast<double>(i) + 0.5) * static_cast<double>(bin_width_ps);
  }
  bool normalized() const { return normalization > 0.0; }
  double g2(std::size_t i) const { return static_cast<double>(counts[i]) / normalization; }
};

/// Voigt profile parameters. Widths are FWHM in GHz: gamma_hom is the
/// Lorentzian (homogeneous) part, gamma_inhom the Gaussian (inhomogeneous) part.
struct VoigtParams {
  double gamma_hom_ghz{0.0};
  double gamma_inhom_ghz{0.0};
  double center_ghz{0.0};
  double amplitude{1.0};
  double offset{0.0};
};

/// Throws DomainError unless widths are non-negative and not both zero.
void validate(const VoigtParams& p);

/// Coherence numbers for one emitter, as aggregated in reports.
struct CoherenceSummary {
  double gamma_fwhm_ghz{0.0};
  double t2_ns{0.0};
  double gamma_inhom_ghz{0.0};
  double gamma_hom_ghz{0.0};
  std::optional<double> t1_ns;
  std::optional<double> gamma_ft_ghz;
  std::optional<double> t2_ft_ns;
};

/// Uniform output of every fit: named estimates with 1-sigma errors, the
/// scaled covariance, and convergence diagnostics.
struct FitResult {
  std::string model;
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> sigmas;
  std::vector<double> covariance;  // row-major names.size() x names.size()
  double chi2_red{0.0};
  int iterations{0};
  bool converged{false};
  std::vector<std::string> notes;

  std::size_t index(std::string_view name) const;
  double value(std::string_view name) const { return values[index(name)]; }
  double sigma(std::string_view name) const { return sigmas[index(name)]; }
  double cov(std::size_t i, std::size_t j) const { return covariance[i * names.size() + j]; }
};

/// Simple x/y series used for scan, visibility, decay and Rabi data files.
struct XySeries {
  std::string kind;
  std::string x_label{"x"};
  std::string y_label{"y"};
  std::vector<double> x;
  std::vector<double> y;
};

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kLn2 = 0.6931471805599453094172321214581766;

/// FWHM of a Gaussian with standard deviation sigma (same units).
inline double gaussian_fwhm_from_sigma(double sigma) { return 2.0 * std::sqrt(2.0 * kLn2) * sigma; }
inline double gaussian_sigma_from_fwhm(double fwhm) { return fwhm / (2.0 * std::sqrt(2.0 * kLn2)); }

}  // namespace qcw
