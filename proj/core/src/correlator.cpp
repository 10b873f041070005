#include "qcw/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <thread>

namespace qcw {

namespace {

unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QCW_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(std::min<long>(v, 256));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void check_sorted(const std::vector<TimestampPs>& times, std::int32_t channel) {
  if (!std::is_sorted(times.begin(), times.end()))
    throw DomainError("cross_correlate: channel " + std::to_string(channel) +
                      " timestamps are not sorted");
}

// Pair counting for a_idx in [a_begin, a_end): two-pointer window over b.
void correlate_range(const std::vector<TimestampPs>& a, const std::vector<TimestampPs>& b,
                     bool same_channel, std::size_t a_begin, std::size_t a_end,
                     std::int64_t tau_min, std::int64_t bin_width, std::size_t n_bins,
                     std::vector<std::uint64_t>& counts) {
  const std::int64_t tau_max = tau_min + static_cast<std::int64_t>(n_bins) * bin_width;
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = a_begin; i < a_end; ++i) {
    const TimestampPs ta = a[i];
    while (lo < b.size() && b[lo] < ta + tau_min) ++lo;
    if (hi < lo) hi = lo;
    while (hi < b.size() && b[hi] < ta + tau_max) ++hi;
    for (std::size_t j = lo; j < hi; ++j) {
      if (same_channel && j == i) continue;
      const std::int64_t tau = b[j] - ta;
      counts[static_cast<std::size_t>((tau - tau_min) / bin_width)] += 1;
    }
  }
}

}  // namespace

Histogram cross_correlate(const TagStream& tags, const CorrelationRequest& req,
                          unsigned n_workers) {
  if (req.bin_width_ps <= 0) throw DomainError("cross_correlate: bin width must be positive");
  if (req.window_ps < 10 * req.bin_width_ps)
    throw DomainError("cross_correlate: window must be at least 10 bins wide");

  const std::vector<TimestampPs> a = tags.channel_times(req.channel_a);
  const std::vector<TimestampPs> b = tags.channel_times(req.channel_b);
  check_sorted(a, req.channel_a);
  check_sorted(b, req.channel_b);

  const std::int64_t half_bins = req.window_ps / req.bin_width_ps;
  const std::size_t n_bins = static_cast<std::size_t>(2 * half_bins + 1);
  const std::int64_t tau_min = -(half_bins * req.bin_width_ps + req.bin_width_ps / 2);
  const bool same_channel = req.channel_a == req.channel_b;

  Histogram hist;
  hist.bin_width_ps = req.bin_width_ps;
  hist.tau_min_ps = tau_min;
  hist.counts.assign(n_bins, 0);
  hist.meta.events_a = a.size();
  hist.meta.events_b = b.size();
  hist.meta.duration_ps = tags.duration_ps;
  hist.meta.channel_a = req.channel_a;
  hist.meta.channel_b = req.channel_b;

  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(resolve_workers(n_workers),
                                                  std::max<std::size_t>(a.size() / 4096, 1)));
  if (workers <= 1 || a.empty()) {
    correlate_range(a, b, same_channel, 0, a.size(), tau_min, req.bin_width_ps, n_bins,
                    hist.counts);
    return hist;
  }

  std::vector<std::vector<std::uint64_t>> partial(workers,
                                                  std::vector<std::uint64_t>(n_bins, 0));
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t chunk = (a.size() + workers - 1) / workers;
  for (unsigned t = 0; t < workers; ++t) {
    const std::size_t begin = std::min<std::size_t>(t * chunk, a.size());
    const std::size_t end = std::min<std::size_t>(begin + chunk, a.size());
    threads.emplace_back([&, t, begin, end] {
      correlate_range(a, b, same_channel, begin, end, tau_min, req.bin_width_ps, n_bins,
                      partial[t]);
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& local : partial)
    for (std::size_t i = 0; i < n_bins; ++i) hist.counts[i] += local[i];
  return hist;
}

Histogram normalize(Histogram hist, NormalizationMethod method, const CorrelationRequest& req) {
  if (method == NormalizationMethod::poisson_rate) {
    if (hist.meta.duration_ps <= 0 || hist.meta.events_a == 0 || hist.meta.events_b == 0)
      throw DomainError("normalize: poisson_rate needs stream metadata (events and duration)");
    const double duration = static_cast<double>(hist.meta.duration_ps);
    const double rate_a = static_cast<double>(hist.meta.events_a) / duration;
    const double rate_b = static_cast<double>(hist.meta.events_b) / duration;
    hist.normalization = rate_a * rate_b * duration * static_cast<double>(hist.bin_width_ps);
    if (!(hist.normalization > 0.0)) throw DomainError("normalize: zero Poisson level");
    return hist;
  }

  // far_wing: mean counts over bins whose |tau| is inside the window
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    const double tau = std::abs(hist.tau_center_ps(i));
    if (tau >= static_cast<double>(req.norm_window_lo_ps) &&
        tau <= static_cast<double>(req.norm_window_hi_ps)) {
      sum += static_cast<double>(hist.counts[i]);
      ++used;
    }
  }
  if (used == 0) throw DomainError("normalize: far-wing window contains no bins");
  if (sum == 0.0) throw DomainError("normalize: far-wing window has zero counts");
  hist.normalization = sum / static_cast<double>(used);
  return hist;
}

std::function<double(double)> convolve_irf(std::function<double(double)> model,
                                           double irf_fwhm_ps) {
  if (irf_fwhm_ps < 0.0) throw DomainError("convolve_irf: FWHM must be non-negative");
  if (irf_fwhm_ps == 0.0) return model;

  const double sigma = gaussian_sigma_from_fwhm(irf_fwhm_ps);
  const double step = sigma / 8.0;
  const int half = static_cast<int>(std::ceil(6.0 * sigma / step));
  auto weights = std::make_shared<std::vector<double>>();
  weights->reserve(2 * half + 1);
  double total = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double u = static_cast<double>(k) * step / sigma;
    const double w = std::exp(-0.5 * u * u);
    weights->push_back(w);
    total += w;
  }
  for (double& w : *weights) w /= total;  // discrete unit mass: constants stay exact

  return [model = std::move(model), weights, step, half](double tau) {
    double acc = 0.0;
    for (int k = -half; k <= half; ++k)
      acc += (*weights)[static_cast<std::size_t>(k + half)] *
             model(tau - static_cast<double>(k) * step);
    return acc;
  };
}

}  // namespace qcw
