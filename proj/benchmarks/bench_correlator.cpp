#include <benchmark/benchmark.h>

#include "qcw/correlator.hpp"
#include "qcw/random.hpp"

namespace {

qcw::TagStream poisson_stream(std::size_t tags_per_channel, double rate_per_ns,
                              std::uint64_t seed) {
  qcw::Rng rng(seed);
  qcw::TagStream stream;
  stream.n_channels = 2;
  for (int channel = 0; channel < 2; ++channel) {
    double t_ns = 0.0;
    for (std::size_t i = 0; i < tags_per_channel; ++i) {
      t_ns += rng.exponential(rate_per_ns);
      stream.tags.push_back({channel, static_cast<qcw::TimestampPs>(t_ns * 1e3)});
    }
  }
  std::stable_sort(stream.tags.begin(), stream.tags.end(),
                   [](const qcw::TimeTag& a, const qcw::TimeTag& b) { return a.t < b.t; });
  stream.duration_ps = stream.tags.back().t + 1;
  return stream;
}

void BM_CrossCorrelate(benchmark::State& state) {
  const auto stream = poisson_stream(static_cast<std::size_t>(state.range(0)), 0.01, 42);
  qcw::CorrelationRequest req;
  req.bin_width_ps = 10;
  req.window_ps = 500'000;
  for (auto _ : state) {
    auto hist = qcw::cross_correlate(stream, req, 1);
    benchmark::DoNotOptimize(hist.counts.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}
BENCHMARK(BM_CrossCorrelate)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_CrossCorrelateParallel(benchmark::State& state) {
  const auto stream = poisson_stream(1'000'000, 0.01, 42);
  qcw::CorrelationRequest req;
  req.bin_width_ps = 10;
  req.window_ps = 500'000;
  for (auto _ : state) {
    auto hist = qcw::cross_correlate(stream, req, static_cast<unsigned>(state.range(0)));
    benchmark::DoNotOptimize(hist.counts.data());
  }
}
BENCHMARK(BM_CrossCorrelateParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
