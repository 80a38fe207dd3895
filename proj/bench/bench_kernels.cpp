#include <benchmark/benchmark.h>

#include "qsub/acquisition.h"
#include "qsub/denoiser.h"
#include "qsub/dictionary.h"
#include "qsub/signal_model.h"
#include "support.h"

using namespace qsub;

namespace {

Dims const kDims{64, 64};

AcquisitionModel const &model()
{
  static AcquisitionModel const m = test::random_model(kDims, 4, 127, 8, 1, 0.02);
  return m;
}

void BM_kernel(benchmark::State &st)
{
  auto const &m = model();
  for (auto _ : st) {
    benchmark::DoNotOptimize(precompute_kernel(m.phi(), m.samples(), kDims));
  }
}

void BM_kernel_reference(benchmark::State &st)
{
  auto const &m = model();
  for (auto _ : st) {
    benchmark::DoNotOptimize(precompute_kernel_reference(m.phi(), m.samples(), kDims));
  }
}

void BM_normal(benchmark::State &st)
{
  auto const &m = model();
  auto const x = test::random_image(kDims, 4, 2);
  for (auto _ : st) {
    benchmark::DoNotOptimize(normal_apply(m, x));
  }
}

// Small etl: the naive operator needs T*L transforms per call.
void BM_normal_vs_naive_small(benchmark::State &st, bool naive)
{
  static AcquisitionModel const m = test::random_model({32, 32}, 4, 4, 4, 3, 0.3);
  auto const x = test::random_image(m.dims(), 4, 2);
  for (auto _ : st) {
    benchmark::DoNotOptimize(naive ? normal_naive(m, x) : normal_apply(m, x));
  }
}

void BM_conv(benchmark::State &st, bool reference)
{
  DenoiserParams p({8, 16, 1});
  p.theta.setRandom();
  Eigen::MatrixXd const in = Eigen::MatrixXd::Random(kDims.size(), 8);
  for (auto _ : st) {
    benchmark::DoNotOptimize(reference ? conv3x3_reference(in, kDims, p.weight(0), p.bias(0))
                                       : conv3x3(in, kDims, p.weight(0), p.bias(0)));
  }
}

struct MatchSetup
{
  Dictionary dict;
  SubspaceBasis basis;
  DictionaryMatcher matcher;
  Eigen::MatrixXcd signals;
  RealMap b1;

  MatchSetup()
      : dict(build_dictionary(build_grid(desk_grid_spec()), build_schedule({}), IeMode::fixed_at(0.8))),
        basis(compute_basis(dict, BasisTarget{4, std::nullopt})), matcher(DictionaryMatcher::subspace(dict, basis))
  {
    Dims const d{32, 32};
    signals = Eigen::MatrixXcd::Random(d.size(), basis.rank());
    b1.assign(d.size(), 1.0);
  }
};

MatchSetup const &match_setup()
{
  static MatchSetup const s;
  return s;
}

void BM_match(benchmark::State &st, bool serial)
{
  auto const &s = match_setup();
  for (auto _ : st) {
    benchmark::DoNotOptimize(serial ? match_map_serial(s.signals, {32, 32}, s.b1, s.matcher)
                                    : match_map(s.signals, {32, 32}, s.b1, s.matcher));
  }
}

} // namespace

BENCHMARK(BM_kernel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_kernel_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_normal)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_normal_vs_naive_small, kernel, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_normal_vs_naive_small, naive, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_conv, openmp, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_conv, reference, true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_match, openmp, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_match, serial, true)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
