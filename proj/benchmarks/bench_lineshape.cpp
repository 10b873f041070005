#include <benchmark/benchmark.h>

#include "qcw/faddeeva.hpp"
#include "qcw/lineshape.hpp"

namespace {

void BM_FaddeevaLattice(benchmark::State& state) {
  double x = 0.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qcw::faddeeva_w({x, 0.7}));
    x += 1e-6;
  }
}
BENCHMARK(BM_FaddeevaLattice);

void BM_FaddeevaContinuedFraction(benchmark::State& state) {
  double x = 20.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qcw::faddeeva_w({x, 4.0}));
    x += 1e-6;
  }
}
BENCHMARK(BM_FaddeevaContinuedFraction);

void BM_VoigtEval(benchmark::State& state) {
  qcw::VoigtParams p;
  p.gamma_hom_ghz = 0.78;
  p.gamma_inhom_ghz = 3.49;
  double x = -10.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qcw::voigt_eval(x, p));
    x = x < 10.0 ? x + 1e-4 : -10.0;
  }
}
BENCHMARK(BM_VoigtEval);

void BM_CoherenceTime(benchmark::State& state) {
  qcw::VoigtParams p;
  p.gamma_hom_ghz = 0.40;
  p.gamma_inhom_ghz = 3.28;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qcw::coherence_time_ns(qcw::G1Curve::closed_form(p)));
  }
}
BENCHMARK(BM_CoherenceTime);

}  // namespace
