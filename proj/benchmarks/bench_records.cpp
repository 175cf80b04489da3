#include <random>

#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "saap/csv.hpp"
#include "saap/record_schema.hpp"

namespace {

using namespace saap;

std::vector<AnalysisRecord> batch(std::size_t n, const SchemaConfig& schema) {
  std::mt19937_64 rng(42);
  std::vector<AnalysisRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_record(rng, schema));
  return out;
}

void BM_Validate(benchmark::State& state) {
  const auto schema = full_schema();
  const auto records = batch(100, schema);
  for (auto _ : state) {
    for (const auto& r : records) benchmark::DoNotOptimize(validate_record(r, schema));
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_Validate);

void BM_ParseStructuredText(benchmark::State& state) {
  const auto schema = default_schema();
  const std::string payload = testing::first_row_payload();
  for (auto _ : state) benchmark::DoNotOptimize(parse_record(payload, schema));
}
BENCHMARK(BM_ParseStructuredText);

void BM_CsvExport(benchmark::State& state) {
  const auto schema = full_schema();
  const auto records = batch(static_cast<std::size_t>(state.range(0)), schema);
  for (auto _ : state) benchmark::DoNotOptimize(export_csv(records, schema));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CsvExport)->Arg(100)->Arg(1000);

void BM_CsvImport(benchmark::State& state) {
  const auto schema = full_schema();
  const std::string csv = export_csv(batch(static_cast<std::size_t>(state.range(0)), schema), schema);
  for (auto _ : state) benchmark::DoNotOptimize(import_csv(csv, schema));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CsvImport)->Arg(100)->Arg(1000);

}  // namespace
