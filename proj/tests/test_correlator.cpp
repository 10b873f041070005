#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "qcw/correlator.hpp"
#include "qcw/random.hpp"

using namespace qcw;

namespace {

TagStream poisson_pair_stream(double rate_per_ns, double duration_ns, std::uint64_t seed) {
  Rng rng(seed);
  TagStream stream;
  stream.n_channels = 2;
  stream.duration_ps = static_cast<TimestampPs>(duration_ns * 1e3);
  for (int channel = 0; channel < 2; ++channel) {
    double t = 0.0;
    while (true) {
      t += rng.exponential(rate_per_ns);
      if (t >= duration_ns) break;
      stream.tags.push_back({channel, static_cast<TimestampPs>(t * 1e3)});
    }
  }
  std::stable_sort(stream.tags.begin(), stream.tags.end(),
                   [](const TimeTag& a, const TimeTag& b) { return a.t < b.t; });
  return stream;
}

std::vector<std::uint64_t> brute_force_counts(const TagStream& tags, const CorrelationRequest& req,
                                              const Histogram& like) {
  std::vector<std::uint64_t> counts(like.counts.size(), 0);
  const auto a = tags.channel_times(req.channel_a);
  const auto b = tags.channel_times(req.channel_b);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (req.channel_a == req.channel_b && i == j) continue;
      const std::int64_t tau = b[j] - a[i];
      if (const auto idx = like.bin_index(tau)) counts[*idx] += 1;
    }
  return counts;
}

}  // namespace

TEST_CASE("single pair lands in the right bin") {
  TagStream stream;
  stream.n_channels = 2;
  stream.duration_ps = 1000;
  stream.tags = {{0, 0}, {1, 100}};
  CorrelationRequest req;
  req.bin_width_ps = 10;
  req.window_ps = 200;
  const Histogram hist = cross_correlate(stream, req);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    total += hist.counts[i];
    if (hist.counts[i] > 0) {
      const std::int64_t lo = hist.tau_min_ps + static_cast<std::int64_t>(i) * hist.bin_width_ps;
      CHECK(lo <= 100);
      CHECK(100 < lo + hist.bin_width_ps);
    }
  }
  CHECK(total == 1);
}

TEST_CASE("bin layout: +-500 ns at 10 ps gives 100001 bins centered on zero") {
  TagStream stream;
  stream.n_channels = 2;
  stream.duration_ps = 1000;
  stream.tags = {{0, 500}, {1, 500}};
  CorrelationRequest req;
  req.bin_width_ps = 10;
  req.window_ps = 500'000;
  const Histogram hist = cross_correlate(stream, req);
  CHECK(hist.size() == 100'001);
  CHECK(hist.tau_min_ps == -500'005);
  // tau = 0 sits in the central bin
  const auto idx = hist.bin_index(0);
  REQUIRE(idx.has_value());
  CHECK(*idx == 50'000);
}

TEST_CASE("reversal symmetry: swapping channels mirrors the histogram") {
  // even timestamps with bin width 2 keep every delay off the (odd) bin
  // edges, so the floor-binning mirror is exact
  TagStream stream = poisson_pair_stream(0.02, 50'000.0, 42);
  for (TimeTag& tag : stream.tags) tag.t *= 2;
  stream.duration_ps *= 2;
  CorrelationRequest req;
  req.bin_width_ps = 2;
  req.window_ps = 10'000;
  const Histogram fwd = cross_correlate(stream, req);
  CorrelationRequest rev = req;
  rev.channel_a = 1;
  rev.channel_b = 0;
  const Histogram bwd = cross_correlate(stream, rev);
  REQUIRE(fwd.size() == bwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i)
    CHECK(fwd.counts[i] == bwd.counts[fwd.size() - 1 - i]);
}

TEST_CASE("histogram equals brute-force pair counting exactly") {
  const TagStream stream = poisson_pair_stream(0.05, 100'000.0, 7);  // ~5000 tags/channel
  CorrelationRequest req;
  req.bin_width_ps = 50;
  req.window_ps = 20'000;
  const Histogram hist = cross_correlate(stream, req);
  const auto brute = brute_force_counts(stream, req, hist);
  CHECK(hist.counts == brute);

  // same-channel correlation excludes self-pairs
  CorrelationRequest self_req = req;
  self_req.channel_a = 0;
  self_req.channel_b = 0;
  const Histogram self_hist = cross_correlate(stream, self_req);
  const auto self_brute = brute_force_counts(stream, self_req, self_hist);
  CHECK(self_hist.counts == self_brute);
}

TEST_CASE("result is independent of the worker count") {
  const TagStream stream = poisson_pair_stream(0.05, 200'000.0, 9);
  CorrelationRequest req;
  req.bin_width_ps = 20;
  req.window_ps = 5'000;
  const Histogram one = cross_correlate(stream, req, 1);
  for (unsigned workers : {2u, 3u, 8u}) {
    const Histogram parallel = cross_correlate(stream, req, workers);
    CHECK(parallel.counts == one.counts);
  }
}

TEST_CASE("translation invariance: shifting both streams leaves counts unchanged") {
  TagStream stream = poisson_pair_stream(0.02, 50'000.0, 13);
  CorrelationRequest req;
  req.bin_width_ps = 40;
  req.window_ps = 8'000;
  const Histogram base = cross_correlate(stream, req);
  TagStream shifted = stream;
  for (TimeTag& tag : shifted.tags) tag.t += 777'777;
  shifted.duration_ps += 777'777;
  const Histogram moved = cross_correlate(shifted, req);
  CHECK(base.counts == moved.counts);
}

TEST_CASE("Poisson streams: flat histogram at the analytic coincidence level") {
  const double rate = 0.05;      // 1/ns per channel
  const double duration = 2e6;   // ns
  const TagStream stream = poisson_pair_stream(rate, duration, 21);
  CorrelationRequest req;
  req.bin_width_ps = 1'000;
  req.window_ps = 100'000;
  const Histogram hist = cross_correlate(stream, req);
  // expected pairs per bin: r_a r_b D w
  const double expected = rate * rate * duration * 1.0;  // bin width 1 ns
  int outliers = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double sigma = std::sqrt(expected);
    if (std::abs(static_cast<double>(hist.counts[i]) - expected) > 4.0 * sigma) ++outliers;
  }
  // 4-sigma outliers should be rare (p ~ 6e-5); allow a small count
  CHECK(outliers <= 3);
}

TEST_CASE("normalize: far wing and poisson_rate agree on Poisson data") {
  const double rate = 0.05, duration = 2e6;
  const TagStream stream = poisson_pair_stream(rate, duration, 22);
  CorrelationRequest req;
  req.bin_width_ps = 1'000;
  req.window_ps = 100'000;
  req.norm_window_lo_ps = 80'000;
  req.norm_window_hi_ps = 100'000;
  const Histogram raw = cross_correlate(stream, req);
  const Histogram far = normalize(raw, NormalizationMethod::far_wing, req);
  const Histogram poisson = normalize(raw, NormalizationMethod::poisson_rate, req);
  CHECK(far.normalization == doctest::Approx(poisson.normalization).epsilon(0.02));
  // wings normalize to 1 within statistics
  double wing_mean = 0.0;
  std::size_t wing_n = 0;
  for (std::size_t i = 0; i < far.size(); ++i) {
    if (std::abs(far.tau_center_ps(i)) >= 80'000.0) {
      wing_mean += far.g2(i);
      ++wing_n;
    }
  }
  wing_mean /= static_cast<double>(wing_n);
  CHECK(wing_mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("normalize guards: empty window and zero counts") {
  Histogram hist;
  hist.bin_width_ps = 10;
  hist.tau_min_ps = -50;
  hist.counts.assign(10, 0);
  CorrelationRequest req;
  req.norm_window_lo_ps = 1'000'000;  // outside the histogram
  req.norm_window_hi_ps = 2'000'000;
  CHECK_THROWS_AS(normalize(hist, NormalizationMethod::far_wing, req), DomainError);
  req.norm_window_lo_ps = 0;
  req.norm_window_hi_ps = 50;
  CHECK_THROWS_AS(normalize(hist, NormalizationMethod::far_wing, req), DomainError);  // all zero
  CHECK_THROWS_AS(normalize(hist, NormalizationMethod::poisson_rate, req), DomainError);
}

TEST_CASE("unsorted input raises an ordering error") {
  TagStream stream;
  stream.n_channels = 2;
  stream.duration_ps = 1000;
  stream.tags = {{0, 500}, {0, 100}, {1, 50}};
  CorrelationRequest req;
  req.bin_width_ps = 10;
  req.window_ps = 100;
  CHECK_THROWS_AS(cross_correlate(stream, req), DomainError);
}

TEST_CASE("convolve_irf: constants unchanged, dip filled, semigroup property") {
  // constant
  auto flat = convolve_irf([](double) { return 2.0; }, 93.0);
  CHECK(flat(0.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(flat(1234.5) == doctest::Approx(2.0).epsilon(1e-12));

  // antibunching dip rises at zero after convolution
  const double t_b_ps = 578.0;
  auto dip = [t_b_ps](double tau) { return 1.0 - std::exp(-std::abs(tau) / t_b_ps); };
  auto smeared = convolve_irf(dip, 93.0);
  CHECK(dip(0.0) == 0.0);
  CHECK(smeared(0.0) > 0.0);
  CHECK(smeared(0.0) < 0.5);

  // convolving twice with f equals once with f sqrt(2)
  auto twice = convolve_irf(convolve_irf(dip, 93.0), 93.0);
  auto once = convolve_irf(dip, 93.0 * std::sqrt(2.0));
  for (double tau : {0.0, 50.0, 120.0, 400.0, 1500.0}) {
    CHECK(twice(tau) == doctest::Approx(once(tau)).epsilon(1e-4));
  }

  // zero FWHM returns the model unchanged
  auto same = convolve_irf(dip, 0.0);
  CHECK(same(37.0) == dip(37.0));
}
