#include <benchmark/benchmark.h>

#include "vicl/flow_analysis.hpp"

namespace {

void BM_AnalyzeTrace(benchmark::State& state) {
  const auto seq = static_cast<std::size_t>(state.range(0));
  const auto bundle = vicl::make_synthetic_trace(5, 4, 8, seq, {seq / 4, seq / 2}, seq - 1, {seq / 2 + 1, seq - 2});
  for (auto _ : state) benchmark::DoNotOptimize(vicl::analyze_trace(bundle));
}
BENCHMARK(BM_AnalyzeTrace)->Arg(64)->Arg(256);

void BM_IndexSets(benchmark::State& state) {
  const auto seq = static_cast<std::size_t>(state.range(0));
  const std::vector<std::size_t> labels{seq / 4, seq / 2};
  for (auto _ : state) benchmark::DoNotOptimize(vicl::build_index_sets(labels, seq - 1, {seq / 2 + 1, seq - 2}, seq));
}
BENCHMARK(BM_IndexSets)->Arg(256);

}  // namespace
