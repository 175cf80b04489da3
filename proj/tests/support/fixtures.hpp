#pragma once

// Shared test data: the published sample rows, record generators and
// store/pipeline setup helpers.

#include <random>
#include <string>
#include <vector>

#include "saap/corpus_store.hpp"
#include "saap/pipeline.hpp"
#include "saap/record_schema.hpp"

namespace saap::testing {

// Upper panel of the sample table: one row per analyzed judgment.
struct UpperRow {
  double overall;
  double bias;
  double credibility;
  double clarity;
  double depth;
  int number;
};

// Lower panel: tone and speech-act columns.
struct LowerRow {
  double humor;
  double sarcasm;
  double persuasive;
  double declarative;
  double inquisitive;
  double undertones;
  double exclamatory;
};

const std::vector<UpperRow>& upper_panel();  // 25 rows
const std::vector<LowerRow>& lower_panel();  // 35 rows

AnalysisRecord record_from_rows(const UpperRow& up, const LowerRow& low, int row);

// 25 records: upper row i joined with lower row i.
std::vector<AnalysisRecord> sample_records();
// 35 records: lower row i joined with upper row i mod 25. Contains the
// 0.1/99.8/0.1 speech-act row.
std::vector<AnalysisRecord> sample_records_extended();

// Structured-text payload of the first sample row.
std::string first_row_payload();

// Valid record with random scores and awkward text (quotes, commas, newlines,
// non-ASCII). Extensions cover every optional text field of `schema`.
AnalysisRecord random_record(std::mt19937_64& rng, const SchemaConfig& schema);

JudgmentDocument make_document(const std::string& jurisdiction, const std::string& language,
                               int index, const std::string& body_prefix = "Judgment");

// Ingests one document per record (jurisdictions cycled from the list) and
// stores the records under a new run.
RunId store_run(CorpusStore& store, const std::vector<AnalysisRecord>& records,
                const std::vector<std::string>& jurisdictions = {"UK"},
                const SchemaConfig& schema = default_schema(), bool calibration = false);

// Records as StoredRecords with ids rec-00000001... and the given jurisdictions
// cycled; no store involved.
std::vector<StoredRecord> as_stored(const std::vector<AnalysisRecord>& records,
                                    const std::vector<std::string>& jurisdictions = {"UK"});

// In-memory pipeline over `provider`, with fast retries.
PipelineConfig test_config(std::shared_ptr<Provider> provider);

}  // namespace saap::testing
