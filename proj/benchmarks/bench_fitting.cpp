#include <benchmark/benchmark.h>

#include <random>

#include "qcw/fitting.hpp"

namespace {

qcw::HbtFitParams reference_params() {
  qcw::HbtFitParams p;
  p.b = 0.95;
  p.t_b_ns = 0.578;
  p.c = {0.25, 0.20, 0.15};
  p.t_c_ns = {6.6, 24.0, 117.0};
  return p;
}

void BM_HbtModelConvolved(benchmark::State& state) {
  const qcw::HbtFitParams p = reference_params();
  double tau = -500'000.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qcw::hbt_model_convolved(tau, p, 93.0));
    tau = tau < 500'000.0 ? tau + 50.0 : -500'000.0;
  }
}
BENCHMARK(BM_HbtModelConvolved);

void BM_FitHbt(benchmark::State& state) {
  const qcw::HbtFitParams truth = reference_params();
  qcw::Histogram hist;
  hist.bin_width_ps = 50;
  const std::int64_t half_bins = 500'000 / 50;
  hist.tau_min_ps = -(half_bins * 50 + 25);
  hist.counts.assign(static_cast<std::size_t>(2 * half_bins + 1), 0);
  hist.normalization = 1200.0;
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double g2 = qcw::hbt_model_convolved(hist.tau_center_ps(i), truth, 93.0);
    std::poisson_distribution<std::uint64_t> draw(g2 * hist.normalization);
    hist.counts[i] = draw(rng);
  }
  for (auto _ : state) {
    auto fit = qcw::fit_hbt(hist, 93.0);
    benchmark::DoNotOptimize(fit.params);
  }
}
BENCHMARK(BM_FitHbt)->Unit(benchmark::kMillisecond);

}  // namespace
