#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "t1noise/acquisition.hpp"
#include "t1noise/epr.hpp"
#include "t1noise/fitting.hpp"
#include "t1noise/lattice.hpp"

using namespace t1noise;

namespace {

void BM_CarbonPairPass(benchmark::State& state) {
  lattice::LatticeConfig c;
  c.enrichment = 1.0;
  c.lattice_size_nm = static_cast<double>(state.range(0));
  const auto lat = lattice::build_lattice(c, 0);
  for (auto _ : state) benchmark::DoNotOptimize(lattice::carbon_second_moment(lat));
  state.counters["carbons"] = static_cast<double>(lat.carbon_positions.size());
}
BENCHMARK(BM_CarbonPairPass)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_StretchedFit(benchmark::State& state) {
  std::vector<double> t;
  for (int i = 1; i <= 40; ++i) t.push_back(10.0 * i);
  const auto curve = acq::simulate_decay(120.0, 0.75, 372.0, t, 3.72, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fit::fit_stretched_exponential(curve));
}
BENCHMARK(BM_StretchedFit);

void BM_ProfileFit(benchmark::State& state) {
  relax::TsallianProfile truth;
  truth.narrow = {0.6, 0.012, 0.0, 1.3};
  truth.broad = {0.15, 0.25, 0.0, 1.8};
  truth.offset = 0.002;
  RelaxometryProfile prof;
  for (int i = 0; i < 55; ++i) {
    const double b = 1e-3 * std::pow(7000.0, i / 54.0);
    prof.fields_t.push_back(b);
    prof.rates_per_s.push_back(truth.rate(b) * (1.0 + 0.02 * std::sin(7.0 * i)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit::fit_relaxation_profile(prof));
}
BENCHMARK(BM_ProfileFit)->Unit(benchmark::kMillisecond);

void BM_EprProcess(benchmark::State& state) {
  const auto s = epr::synthesize_spectrum(
      3300, 3400, 4001, {{3330.0, 1.0, 1.0, 1.0}, {3350.0, 1.0, 1.0, 1.0}, {3370.0, 1.0, 1.0, 1.0}},
      0.01, 3);
  for (auto _ : state) benchmark::DoNotOptimize(epr::process_spectrum(s));
}
BENCHMARK(BM_EprProcess)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
