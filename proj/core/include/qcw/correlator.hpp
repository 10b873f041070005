#pragma once

#include <functional>

#include "qcw/types.hpp"

// Second-order correlation histograms from time-tag streams. Full pair
// counting (every pair within the window, no start-stop truncation) with a
// two-pointer sweep; O(N k) where k is the mean number of partners per
// window. Parallelizes over chunks of stream A with bitwise-identical
// results for any worker count.

namespace qcw {

struct CorrelationRequest {
  std::int32_t channel_a{0};
  std::int32_t channel_b{1};
  std::int64_t bin_width_ps{10};
  std::int64_t window_ps{500'000};  // histogram spans [-window, +window]
  // far-delay range used by far-wing normalization, |tau| in this interval
  std::int64_t norm_window_lo_ps{400'000};
  std::int64_t norm_window_hi_ps{500'000};
};

enum class NormalizationMethod { poisson_rate, far_wing };

/// Correlates channel_b against channel_a: tau = t_b - t_a. Bin centers sit
/// at integer multiples of bin_width so the number of bins is
/// 2*floor(window/bin) + 1. Requires per-channel sorted tags.
/// n_workers = 0 picks QCW_THREADS or the hardware count.
Histogram cross_correlate(const TagStream& tags, const CorrelationRequest& req,
                          unsigned n_workers = 0);

/// Fills hist.normalization so counts/normalization is g2.
/// poisson_rate: r_a * r_b * duration * bin_width from stream metadata.
/// far_wing: mean count over bins whose |tau| lies in the normalization window.
Histogram normalize(Histogram hist, NormalizationMethod method,
                    const CorrelationRequest& req = {});

/// Returns the model convolved with a unit-area Gaussian of the given FWHM
/// (quadrature on a grid of 8 points per sigma, +-6 sigma support).
/// irf_fwhm_ps = 0 returns the model unchanged. tau is in ps.
std::function<double(double)> convolve_irf(std::function<double(double)> model,
                                           double irf_fwhm_ps);

}  // namespace qcw
