#include <benchmark/benchmark.h>

#include "vicl/demo_store.hpp"
#include "vicl/retrieval.hpp"
#include "vicl/splitmix64.hpp"

namespace {

std::vector<float> random_vector(vicl::SplitMix64& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.unit() * 2.0 - 1.0);
  return v;
}

vicl::EmbeddingIndex random_index(std::size_t n, std::size_t dim) {
  vicl::SplitMix64 rng(1);
  vicl::EmbeddingIndex index(dim);
  for (std::size_t i = 0; i < n; ++i) index.add("c" + std::to_string(i), vicl::EmbeddingVector(random_vector(rng, dim)));
  return index;
}

void BM_Cosine(benchmark::State& state) {
  vicl::SplitMix64 rng(2);
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(rng, dim);
  const auto b = random_vector(rng, dim);
  for (auto _ : state) benchmark::DoNotOptimize(vicl::cosine_similarity(a, b));
}
BENCHMARK(BM_Cosine)->Arg(16)->Arg(512)->Arg(1024);

void BM_TopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto index = random_index(n, 512);
  vicl::SplitMix64 rng(3);
  const vicl::EmbeddingVector query(random_vector(rng, 512));
  for (auto _ : state) benchmark::DoNotOptimize(vicl::retrieve_top_k(index, query, 20));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_TopK)->Arg(100)->Arg(1000)->Arg(10000);

void BM_IndexCodec(benchmark::State& state) {
  const auto index = random_index(static_cast<std::size_t>(state.range(0)), 512);
  for (auto _ : state) benchmark::DoNotOptimize(vicl::decode_index(vicl::encode_index(index)));
}
BENCHMARK(BM_IndexCodec)->Arg(1000);

}  // namespace
