#include <random>

#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "saap/aggregator.hpp"

namespace {

using namespace saap;

std::vector<StoredRecord> stored(std::size_t n) {
  std::mt19937_64 rng(7);
  std::vector<AnalysisRecord> records;
  for (std::size_t i = 0; i < n; ++i) records.push_back(testing::random_record(rng, default_schema()));
  return testing::as_stored(records, {"UK", "Sweden", "Germany"});
}

void BM_DeviationRank(benchmark::State& state) {
  const auto records = stored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(deviation_rank(records, "biasLevel"));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DeviationRank)->RangeMultiplier(10)->Range(100, 100000)->Complexity();

void BM_SelectCandidates(benchmark::State& state) {
  const auto records = stored(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(select_candidates(records, 5));
}
BENCHMARK(BM_SelectCandidates)->Arg(188)->Arg(10000);

}  // namespace
