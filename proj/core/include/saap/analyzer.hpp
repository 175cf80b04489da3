#pragma once

// SHIRLEY: per-document analysis runs, the media-baseline calibration harness
// and the temperature repeatability harness.

#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "saap/corpus_store.hpp"
#include "saap/llm_gateway.hpp"
#include "saap/profiles.hpp"
#include "saap/record_schema.hpp"

namespace saap {

struct AnalyzerOptions {
  // Documents longer than this (in estimated tokens) are analyzed on an excerpt.
  std::size_t document_token_budget = 24000;
  double head_fraction = 0.7;  // share of the excerpt taken from the start
  RepairLoopPolicy policy;
  std::ostream* progress = nullptr;  // line-delimited JSON events
};

// Body text sent to the model, and whether it is an excerpt.
struct Excerpt {
  std::string text;
  bool truncated = false;
};

Excerpt excerpt_document(const std::string& body, std::size_t max_chars, double head_fraction);

// Output-format instructions appended to every analysis request.
std::string analysis_instructions(const SchemaConfig& schema);

struct CalibrationEntry {
  DocId doc_id;
  std::map<std::string, std::pair<double, double>> expected_ranges;  // inclusive
};

struct CalibrationSpec {
  std::vector<CalibrationEntry> entries;
};

// {"entries": [{"docId": ..., "expectedRanges": {"<field>": [lo, hi]}}]};
// throws PreconditionError on a malformed spec.
CalibrationSpec calibration_spec_from_json(const nlohmann::json& j);

struct CalibrationResult {
  DocId doc_id;
  std::string field;
  std::optional<double> observed;  // nullopt if the analysis failed
  std::pair<double, double> expected;
  bool pass = false;
};

struct CalibrationReport {
  RunId run_id;  // the flagged calibration run
  std::vector<CalibrationResult> per_entry;
  bool overall_pass = false;
};

// Conjunction of all entry passes; false for an empty report.
bool overall_pass(const std::vector<CalibrationResult>& results);

struct FieldSpread {
  double max_abs_spread = 0;
  bool identical = true;
};

struct RepeatabilityReport {
  DocId doc_id;
  double temperature = 0;
  int n = 0;
  std::map<std::string, FieldSpread> per_field;  // numeric fields
  std::map<std::string, bool> text_identical;    // text and structured fields
};

nlohmann::json to_json(const CalibrationReport& report);
nlohmann::json to_json(const RepeatabilityReport& report);

class Analyzer {
 public:
  Analyzer(CorpusStore& store, Gateway& gateway, SchemaConfig schema, AnalyzerOptions options = {});

  const SchemaConfig& schema() const { return schema_; }

  // Opens a pending run with a snapshot of the profile and analysis settings.
  RunId begin_run(const AgentProfile& profile, bool calibration = false, int workers = 1);

  // Analyzes one document under an open run and persists the record.
  StoredRecord analyze_document(const DocId& doc, const AgentProfile& profile, const RunId& run);
  // Single-document run: opens a run, analyzes, closes it.
  StoredRecord analyze_document(const DocId& doc, const AgentProfile& profile);

  // Analyzes a record without persisting it.
  Validated<AnalysisRecord> analyze_text(const JudgmentDocument& doc, const AgentProfile& profile,
                                         const CallOptions& call = {});

  // One record per matched document. Per-document failures are recorded on
  // the run and do not abort it. Throws EmptyCorpus when nothing matches.
  AnalysisRun run_batch(const DocumentFilter& filter, const AgentProfile& profile, int workers = 1);

  CalibrationReport run_calibration(const CalibrationSpec& spec, const AgentProfile& profile);

  // n analyses with seeds 0..n-1 at the profile temperature; not persisted.
  RepeatabilityReport run_repeatability(const DocId& doc, const AgentProfile& profile, int n);

 private:
  void emit(const nlohmann::json& event);

  CorpusStore& store_;
  Gateway& gateway_;
  SchemaConfig schema_;
  AnalyzerOptions options_;
  std::mutex progress_mutex_;
};

}  // namespace saap
