#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saap/ids.hpp"
#include "saap/record_schema.hpp"
#include "saap/util.hpp"

struct sqlite3;

namespace saap {

struct JudgmentDocument {
  DocId doc_id;  // assigned on ingest when empty
  std::string jurisdiction;
  std::string language;  // BCP-47 style, e.g. "en-GB", "rw", "sv"
  std::string court;
  std::optional<std::string> decision_date;  // YYYY-MM-DD
  std::string source_ref;
  std::string body;

  friend bool operator==(const JudgmentDocument&, const JudgmentDocument&) = default;
};

enum class RunStatus { kPending, kComplete, kFailed };

std::string_view to_string(RunStatus status);

struct AnalysisRun {
  RunId run_id;
  ProfileId profile_id;
  int profile_revision = 0;
  double temperature = 0;
  std::map<std::string, double> penalty_settings;
  std::string schema_version;
  Timestamp started_at{};
  std::optional<Timestamp> finished_at;
  RunStatus status = RunStatus::kPending;
  bool calibration = false;
  // Snapshot of the run parameters (profile text, excerpting policy...).
  nlohmann::json parameters = nlohmann::json::object();
};

struct StoredRecord {
  RecordId record_id;
  RunId run_id;
  DocId doc_id;
  AnalysisRecord record;
  Timestamp created_at{};
  int attempt_count = 1;
  // Joined from the document.
  std::string jurisdiction;
  std::string language;
};

struct FieldRange {
  std::string field;
  std::optional<double> min;  // inclusive
  std::optional<double> max;  // inclusive
};

struct RecordFilter {
  std::optional<RunId> run_id;
  std::optional<std::string> jurisdiction;
  std::vector<FieldRange> ranges;
  // Records of calibration runs are only returned when asked for, or when
  // `run_id` names a calibration run.
  bool include_calibration = false;
};

struct DocumentFilter {
  std::optional<std::string> jurisdiction;
  std::optional<std::string> language;
  std::vector<DocId> doc_ids;  // empty = any
};

struct RunFailure {
  DocId doc_id;
  std::string code;
  std::string message;
};

struct StoreOptions {
  std::string path = ":memory:";
  std::set<std::string> jurisdictions = {"US", "UK", "Rwanda", "Sweden", "HongKong", "other"};
};

// True when `record` satisfies every predicate of `filter` that concerns the
// record itself (field ranges). Exposed so callers can reuse the exact
// predicate semantics.
bool matches_ranges(const AnalysisRecord& record, const std::vector<FieldRange>& ranges);

// Embedded relational store for documents, analysis runs, records and the
// pipeline's JSON artifacts (profiles, findings, arbitration cases).
//
// Thread-safe: one connection guarded by a mutex, so writes are serialized
// across all runs and readers see committed state.
class CorpusStore {
 public:
  explicit CorpusStore(StoreOptions options = {});
  ~CorpusStore();
  CorpusStore(const CorpusStore&) = delete;
  CorpusStore& operator=(const CorpusStore&) = delete;

  const StoreOptions& options() const { return options_; }

  // Idempotent on identical (source_ref, body): returns the existing id.
  DocId ingest_document(const JudgmentDocument& doc);
  JudgmentDocument get_document(const DocId& id) const;
  std::optional<JudgmentDocument> find_document(const DocId& id) const;
  std::vector<JudgmentDocument> list_documents(const DocumentFilter& filter = {}) const;
  // Rejected with IntegrityError while records reference the document.
  void delete_document(const DocId& id);

  // Persists `schema` under its version (a version may not change content).
  RunId create_run(const AnalysisRun& params, const SchemaConfig& schema);
  AnalysisRun get_run(const RunId& id) const;
  std::vector<AnalysisRun> list_runs() const;
  void finish_run(const RunId& id, RunStatus status);
  void delete_run(const RunId& id);
  SchemaConfig run_schema(const RunId& id) const;
  std::optional<SchemaConfig> find_schema(const std::string& version) const;

  RecordId put_record(const RunId& run, const DocId& doc, const AnalysisRecord& record,
                      int attempt_count = 1);
  StoredRecord get_record(const RecordId& id) const;
  // Ordered by record id.
  std::vector<StoredRecord> query_records(const RecordFilter& filter = {}) const;

  void record_failure(const RunId& run, const DocId& doc, const std::string& code,
                      const std::string& message);
  std::vector<RunFailure> run_failures(const RunId& run) const;

  // Record batches of at most `batch_size` as CSV texts, each with a header.
  std::vector<std::string> export_batch(const RunId& run, std::size_t batch_size = 100) const;
  // All batches concatenated under a single header.
  std::string export_run_csv(const RunId& run, std::size_t batch_size = 100) const;

  // Monotonic per-prefix counter: "F" -> "F1", "F2", ...
  std::string allocate_id(const std::string& prefix);

  // Generic JSON artifacts keyed by (kind, id).
  void put_artifact(const std::string& kind, const std::string& id,
                    const nlohmann::json& body);
  std::optional<nlohmann::json> get_artifact(const std::string& kind,
                                             const std::string& id) const;
  // Ordered by insertion.
  std::vector<std::pair<std::string, nlohmann::json>> list_artifacts(
      const std::string& kind) const;

 private:
  void exec(const char* sql);
  bool run_exists(const RunId& id) const;
  bool document_exists(const DocId& id) const;

  StoreOptions options_;
  sqlite3* db_ = nullptr;
  mutable std::recursive_mutex mutex_;
};

nlohmann::json to_json(const JudgmentDocument& doc);
JudgmentDocument document_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AnalysisRun& run);
nlohmann::json to_json(const StoredRecord& record);

}  // namespace saap
