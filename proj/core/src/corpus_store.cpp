#include "saap/corpus_store.hpp"

#include <algorithm>
#include <regex>

#include <sqlite3.h>

#include "saap/csv.hpp"

namespace saap {

namespace {

using json = nlohmann::json;

constexpr const char* kSchemaSql = R"sql(
PRAGMA foreign_keys = ON;
CREATE TABLE IF NOT EXISTS documents (
  doc_id        TEXT PRIMARY KEY,
  content_hash  TEXT NOT NULL UNIQUE,
  jurisdiction  TEXT NOT NULL,
  language      TEXT NOT NULL,
  court         TEXT NOT NULL,
  decision_date TEXT,
  source_ref    TEXT NOT NULL,
  body          TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS schemas (
  version TEXT PRIMARY KEY,
  body    TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS runs (
  run_id           TEXT PRIMARY KEY,
  seq              INTEGER NOT NULL,
  profile_id       TEXT NOT NULL,
  profile_revision INTEGER NOT NULL,
  temperature      REAL NOT NULL,
  penalties        TEXT NOT NULL,
  schema_version   TEXT NOT NULL REFERENCES schemas(version),
  started_at       TEXT NOT NULL,
  finished_at      TEXT,
  status           TEXT NOT NULL,
  calibration      INTEGER NOT NULL,
  parameters       TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS records (
  record_id     TEXT PRIMARY KEY,
  run_id        TEXT NOT NULL REFERENCES runs(run_id) ON DELETE RESTRICT,
  doc_id        TEXT NOT NULL REFERENCES documents(doc_id) ON DELETE RESTRICT,
  body          TEXT NOT NULL,
  attempt_count INTEGER NOT NULL,
  created_at    TEXT NOT NULL,
  UNIQUE (run_id, doc_id)
);
CREATE TABLE IF NOT EXISTS run_failures (
  run_id  TEXT NOT NULL REFERENCES runs(run_id) ON DELETE CASCADE,
  doc_id  TEXT NOT NULL,
  code    TEXT NOT NULL,
  message TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sequences (
  prefix TEXT PRIMARY KEY,
  next   INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS artifacts (
  kind TEXT NOT NULL,
  id   TEXT NOT NULL,
  seq  INTEGER NOT NULL,
  body TEXT NOT NULL,
  PRIMARY KEY (kind, id)
);
)sql";

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw std::runtime_error(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, const std::string& v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()),
                            SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, double v) {
    check(sqlite3_bind_double(stmt_, i, v));
    return *this;
  }
  Statement& bind_null(int i) {
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }
  Statement& bind(int i, const std::optional<std::string>& v) {
    return v ? bind(i, *v) : bind_null(i);
  }

  // True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw std::runtime_error(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p),
                           static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  std::optional<std::string> optional_text(int col) const {
    if (sqlite3_column_type(stmt_, col) == SQLITE_NULL) return std::nullopt;
    return text(col);
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) {
      throw std::runtime_error(std::string("sqlite bind: ") + sqlite3_errmsg(db_));
    }
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

// Commits on scope exit unless an exception is in flight.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { run("BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (std::uncaught_exceptions() > exceptions_) {
      sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    } else {
      run("COMMIT");
    }
  }
  Transaction(const Transaction&) = delete;
  Transaction& operator=(const Transaction&) = delete;

 private:
  void run(const char* sql) {
    if (sqlite3_exec(db_, sql, nullptr, nullptr, nullptr) != SQLITE_OK) {
      throw std::runtime_error(std::string("sqlite: ") + sqlite3_errmsg(db_));
    }
  }
  sqlite3* db_;
  int exceptions_ = std::uncaught_exceptions();
};

RunStatus parse_status(const std::string& s) {
  if (s == "complete") return RunStatus::kComplete;
  if (s == "failed") return RunStatus::kFailed;
  return RunStatus::kPending;
}

std::string zero_pad(std::int64_t n, int width) {
  std::string s = std::to_string(n);
  if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
  return s;
}

bool valid_language_tag(const std::string& tag) {
  static const std::regex kTag("^[A-Za-z]{2,3}(-[A-Za-z0-9]{2,8})*$");
  return std::regex_match(tag, kTag);
}

bool valid_date(const std::string& date) {
  static const std::regex kDate("^[0-9]{4}-[0-9]{2}-[0-9]{2}$");
  return std::regex_match(date, kDate);
}

constexpr const char* kDocumentColumns =
    "doc_id, jurisdiction, language, court, decision_date, source_ref, body";

JudgmentDocument read_document(const Statement& st) {
  JudgmentDocument doc;
  doc.doc_id = DocId(st.text(0));
  doc.jurisdiction = st.text(1);
  doc.language = st.text(2);
  doc.court = st.text(3);
  doc.decision_date = st.optional_text(4);
  doc.source_ref = st.text(5);
  doc.body = st.text(6);
  return doc;
}

constexpr const char* kRunColumns =
    "run_id, profile_id, profile_revision, temperature, penalties, schema_version, "
    "started_at, finished_at, status, calibration, parameters";

AnalysisRun read_run(const Statement& st) {
  AnalysisRun run;
  run.run_id = RunId(st.text(0));
  run.profile_id = ProfileId(st.text(1));
  run.profile_revision = static_cast<int>(st.integer(2));
  run.temperature = st.real(3);
  run.penalty_settings = json::parse(st.text(4)).get<std::map<std::string, double>>();
  run.schema_version = st.text(5);
  run.started_at = parse_timestamp(st.text(6)).value_or(Timestamp{});
  if (auto f = st.optional_text(7)) run.finished_at = parse_timestamp(*f);
  run.status = parse_status(st.text(8));
  run.calibration = st.integer(9) != 0;
  run.parameters = json::parse(st.text(10));
  return run;
}

}  // namespace

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::kPending: return "pending";
    case RunStatus::kComplete: return "complete";
    case RunStatus::kFailed: return "failed";
  }
  return "pending";
}

bool matches_ranges(const AnalysisRecord& record, const std::vector<FieldRange>& ranges) {
  return std::all_of(ranges.begin(), ranges.end(), [&](const FieldRange& range) {
    auto value = numeric_field(record, range.field);
    if (!value) return false;
    if (range.min && *value < *range.min) return false;
    if (range.max && *value > *range.max) return false;
    return true;
  });
}

CorpusStore::CorpusStore(StoreOptions options) : options_(std::move(options)) {
  const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
  if (sqlite3_open_v2(options_.path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
    std::string message = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw ConfigurationError("cannot open store at " + options_.path + ": " + message);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(kSchemaSql);
}

CorpusStore::~CorpusStore() { sqlite3_close(db_); }

void CorpusStore::exec(const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string message = err ? err : "unknown error";
    sqlite3_free(err);
    throw std::runtime_error("sqlite: " + message);
  }
}

DocId CorpusStore::ingest_document(const JudgmentDocument& doc) {
  if (doc.body.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Rejected("document body is empty");
  }
  if (!options_.jurisdictions.contains(doc.jurisdiction)) {
    throw Rejected("unknown jurisdiction tag '" + doc.jurisdiction + "'");
  }
  if (!valid_language_tag(doc.language)) {
    throw Rejected("invalid language tag '" + doc.language + "'");
  }
  if (doc.decision_date && !valid_date(*doc.decision_date)) {
    throw Rejected("decision date must be YYYY-MM-DD");
  }
  const std::string hash = sha256_hex(doc.source_ref + '\x1f' + doc.body);

  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  {
    Statement st(db_, "SELECT doc_id FROM documents WHERE content_hash = ?");
    st.bind(1, hash);
    if (st.step()) return DocId(st.text(0));
  }
  const DocId id = doc.doc_id.empty() ? DocId("doc-" + hash.substr(0, 16)) : doc.doc_id;
  if (document_exists(id)) {
    throw IntegrityError("document id " + id.str() + " already holds different content");
  }
  Statement st(db_,
               "INSERT INTO documents (doc_id, content_hash, jurisdiction, language, "
               "court, decision_date, source_ref, body) VALUES (?,?,?,?,?,?,?,?)");
  st.bind(1, id.str()).bind(2, hash).bind(3, doc.jurisdiction).bind(4, doc.language);
  st.bind(5, doc.court).bind(6, doc.decision_date).bind(7, doc.source_ref).bind(8, doc.body);
  st.step();
  return id;
}

std::optional<JudgmentDocument> CorpusStore::find_document(const DocId& id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, (std::string("SELECT ") + kDocumentColumns +
                     " FROM documents WHERE doc_id = ?").c_str());
  st.bind(1, id.str());
  if (!st.step()) return std::nullopt;
  return read_document(st);
}

JudgmentDocument CorpusStore::get_document(const DocId& id) const {
  auto doc = find_document(id);
  if (!doc) throw NotFound("document " + id.str() + " not found");
  return *doc;
}

std::vector<JudgmentDocument> CorpusStore::list_documents(const DocumentFilter& filter) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, (std::string("SELECT ") + kDocumentColumns +
                     " FROM documents ORDER BY doc_id").c_str());
  std::vector<JudgmentDocument> out;
  while (st.step()) {
    auto doc = read_document(st);
    if (filter.jurisdiction && doc.jurisdiction != *filter.jurisdiction) continue;
    if (filter.language && doc.language != *filter.language) continue;
    if (!filter.doc_ids.empty() &&
        std::find(filter.doc_ids.begin(), filter.doc_ids.end(), doc.doc_id) ==
            filter.doc_ids.end()) {
      continue;
    }
    out.push_back(std::move(doc));
  }
  return out;
}

bool CorpusStore::document_exists(const DocId& id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT 1 FROM documents WHERE doc_id = ?");
  st.bind(1, id.str());
  return st.step();
}

bool CorpusStore::run_exists(const RunId& id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT 1 FROM runs WHERE run_id = ?");
  st.bind(1, id.str());
  return st.step();
}

void CorpusStore::delete_document(const DocId& id) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  if (!document_exists(id)) throw NotFound("document " + id.str() + " not found");
  Statement count(db_, "SELECT COUNT(*) FROM records WHERE doc_id = ?");
  count.bind(1, id.str());
  count.step();
  if (count.integer(0) > 0) {
    throw IntegrityError("document " + id.str() + " is referenced by " +
                         std::to_string(count.integer(0)) + " records");
  }
  Statement st(db_, "DELETE FROM documents WHERE doc_id = ?");
  st.bind(1, id.str());
  st.step();
}

RunId CorpusStore::create_run(const AnalysisRun& params, const SchemaConfig& schema) {
  check_schema(schema);
  if (!(params.temperature >= 0.0 && params.temperature <= 2.0)) {
    throw PreconditionError("temperature must lie in [0,2]");
  }
  const std::string schema_body = schema_to_json(schema).dump();

  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  {
    Statement st(db_, "SELECT body FROM schemas WHERE version = ?");
    st.bind(1, schema.version);
    if (st.step()) {
      if (st.text(0) != schema_body) {
        throw ConfigurationError("schema version " + schema.version +
                                 " is already stored with different fields");
      }
    } else {
      Statement ins(db_, "INSERT INTO schemas (version, body) VALUES (?, ?)");
      ins.bind(1, schema.version).bind(2, schema_body);
      ins.step();
    }
  }
  const std::string id = allocate_id("R");
  const std::int64_t seq = std::stoll(id.substr(1));
  Statement st(db_, (std::string("INSERT INTO runs (seq, ") + kRunColumns +
                     ") VALUES (?,?,?,?,?,?,?,?,?,?,?,?)").c_str());
  st.bind(1, seq).bind(2, id).bind(3, params.profile_id.str());
  st.bind(4, static_cast<std::int64_t>(params.profile_revision));
  st.bind(5, params.temperature).bind(6, json(params.penalty_settings).dump());
  st.bind(7, schema.version);
  st.bind(8, format_timestamp(params.started_at == Timestamp{} ? now_ms() : params.started_at));
  st.bind_null(9);
  st.bind(10, std::string(to_string(RunStatus::kPending)));
  st.bind(11, static_cast<std::int64_t>(params.calibration ? 1 : 0));
  st.bind(12, params.parameters.dump());
  st.step();
  return RunId(id);
}

AnalysisRun CorpusStore::get_run(const RunId& id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, (std::string("SELECT ") + kRunColumns + " FROM runs WHERE run_id = ?").c_str());
  st.bind(1, id.str());
  if (!st.step()) throw NotFound("run " + id.str() + " not found");
  return read_run(st);
}

std::vector<AnalysisRun> CorpusStore::list_runs() const {
  std::lock_guard lock(mutex_);
  Statement st(db_, (std::string("SELECT ") + kRunColumns + " FROM runs ORDER BY seq").c_str());
  std::vector<AnalysisRun> out;
  while (st.step()) out.push_back(read_run(st));
  return out;
}

void CorpusStore::finish_run(const RunId& id, RunStatus status) {
  std::lock_guard lock(mutex_);
  auto run = get_run(id);
  auto finished = now_ms();
  if (finished < run.started_at) finished = run.started_at;
  Statement st(db_, "UPDATE runs SET status = ?, finished_at = ? WHERE run_id = ?");
  st.bind(1, std::string(to_string(status)));
  if (status == RunStatus::kPending) {
    st.bind_null(2);
  } else {
    st.bind(2, format_timestamp(finished));
  }
  st.bind(3, id.str());
  st.step();
}

void CorpusStore::delete_run(const RunId& id) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  if (!run_exists(id)) throw NotFound("run " + id.str() + " not found");
  Statement count(db_, "SELECT COUNT(*) FROM records WHERE run_id = ?");
  count.bind(1, id.str());
  count.step();
  if (count.integer(0) > 0) {
    throw IntegrityError("run " + id.str() + " still holds " +
                         std::to_string(count.integer(0)) + " records");
  }
  Statement st(db_, "DELETE FROM runs WHERE run_id = ?");
  st.bind(1, id.str());
  st.step();
}

std::optional<SchemaConfig> CorpusStore::find_schema(const std::string& version) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT body FROM schemas WHERE version = ?");
  st.bind(1, version);
  if (!st.step()) return std::nullopt;
  return schema_from_json(json::parse(st.text(0)));
}

SchemaConfig CorpusStore::run_schema(const RunId& id) const {
  const auto run = get_run(id);
  auto schema = find_schema(run.schema_version);
  if (!schema) throw NotFound("schema " + run.schema_version + " not found");
  return *schema;
}

RecordId CorpusStore::put_record(const RunId& run, const DocId& doc,
                                 const AnalysisRecord& record, int attempt_count) {
  std::lock_guard lock(mutex_);
  if (!run_exists(run)) throw NotFound("run " + run.str() + " not found");
  if (!document_exists(doc)) throw NotFound("document " + doc.str() + " not found");
  const auto schema = run_schema(run);
  auto report = validate_record(record, schema);
  if (!report.ok()) {
    throw SchemaViolation("record for " + doc.str() + " is invalid:\n" + report.to_string(),
                          {{report, to_structured_text(record)}});
  }
  Transaction tx(db_);
  {
    Statement st(db_, "SELECT record_id FROM records WHERE run_id = ? AND doc_id = ?");
    st.bind(1, run.str()).bind(2, doc.str());
    if (st.step()) {
      throw IntegrityError("run " + run.str() + " already holds a record for " + doc.str());
    }
  }
  const std::string seq = allocate_id("rec-");
  const RecordId id("rec-" + zero_pad(std::stoll(seq.substr(4)), 8));
  Statement st(db_,
               "INSERT INTO records (record_id, run_id, doc_id, body, attempt_count, "
               "created_at) VALUES (?,?,?,?,?,?)");
  st.bind(1, id.str()).bind(2, run.str()).bind(3, doc.str());
  st.bind(4, to_structured_text(record)).bind(5, static_cast<std::int64_t>(attempt_count));
  st.bind(6, format_timestamp(now_ms()));
  st.step();
  return id;
}

namespace {

constexpr const char* kRecordSelect =
    "SELECT r.record_id, r.run_id, r.doc_id, r.body, r.attempt_count, r.created_at, "
    "d.jurisdiction, d.language, u.schema_version, u.calibration "
    "FROM records r JOIN documents d ON d.doc_id = r.doc_id "
    "JOIN runs u ON u.run_id = r.run_id ";

}  // namespace

StoredRecord CorpusStore::get_record(const RecordId& id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, (std::string(kRecordSelect) + "WHERE r.record_id = ?").c_str());
  st.bind(1, id.str());
  if (!st.step()) throw NotFound("record " + id.str() + " not found");
  const auto schema = find_schema(st.text(8));
  StoredRecord out;
  out.record_id = RecordId(st.text(0));
  out.run_id = RunId(st.text(1));
  out.doc_id = DocId(st.text(2));
  out.record = parse_record(st.text(3), *schema);
  out.attempt_count = static_cast<int>(st.integer(4));
  out.created_at = parse_timestamp(st.text(5)).value_or(Timestamp{});
  out.jurisdiction = st.text(6);
  out.language = st.text(7);
  return out;
}

std::vector<StoredRecord> CorpusStore::query_records(const RecordFilter& filter) const {
  std::lock_guard lock(mutex_);
  std::string sql = kRecordSelect;
  std::vector<std::string> where;
  if (filter.run_id) where.push_back("r.run_id = ?");
  if (filter.jurisdiction) where.push_back("d.jurisdiction = ?");
  if (!filter.run_id && !filter.include_calibration) where.push_back("u.calibration = 0");
  for (std::size_t i = 0; i < where.size(); ++i) sql += (i == 0 ? "WHERE " : " AND ") + where[i];
  sql += " ORDER BY r.record_id";

  Statement st(db_, sql.c_str());
  int bind = 1;
  if (filter.run_id) st.bind(bind++, filter.run_id->str());
  if (filter.jurisdiction) st.bind(bind++, *filter.jurisdiction);

  std::map<std::string, SchemaConfig> schemas;
  std::vector<StoredRecord> out;
  while (st.step()) {
    const std::string version = st.text(8);
    auto it = schemas.find(version);
    if (it == schemas.end()) it = schemas.emplace(version, *find_schema(version)).first;
    StoredRecord rec;
    rec.record = parse_record(st.text(3), it->second);
    if (!matches_ranges(rec.record, filter.ranges)) continue;
    rec.record_id = RecordId(st.text(0));
    rec.run_id = RunId(st.text(1));
    rec.doc_id = DocId(st.text(2));
    rec.attempt_count = static_cast<int>(st.integer(4));
    rec.created_at = parse_timestamp(st.text(5)).value_or(Timestamp{});
    rec.jurisdiction = st.text(6);
    rec.language = st.text(7);
    out.push_back(std::move(rec));
  }
  return out;
}

void CorpusStore::record_failure(const RunId& run, const DocId& doc, const std::string& code,
                                 const std::string& message) {
  std::lock_guard lock(mutex_);
  if (!run_exists(run)) throw NotFound("run " + run.str() + " not found");
  Statement st(db_, "INSERT INTO run_failures (run_id, doc_id, code, message) VALUES (?,?,?,?)");
  st.bind(1, run.str()).bind(2, doc.str()).bind(3, code).bind(4, message);
  st.step();
}

std::vector<RunFailure> CorpusStore::run_failures(const RunId& run) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT doc_id, code, message FROM run_failures WHERE run_id = ? "
                    "ORDER BY rowid");
  st.bind(1, run.str());
  std::vector<RunFailure> out;
  while (st.step()) out.push_back({DocId(st.text(0)), st.text(1), st.text(2)});
  return out;
}

std::vector<std::string> CorpusStore::export_batch(const RunId& run,
                                                   std::size_t batch_size) const {
  if (batch_size == 0) throw PreconditionError("batch size must be at least 1");
  std::lock_guard lock(mutex_);
  const auto schema = run_schema(run);
  RecordFilter filter;
  filter.run_id = run;
  const auto stored = query_records(filter);
  std::vector<AnalysisRecord> records;
  records.reserve(stored.size());
  for (const auto& s : stored) records.push_back(s.record);

  std::vector<std::string> batches;
  for (std::size_t begin = 0; begin < records.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, records.size() - begin);
    batches.push_back(export_csv(std::span(records).subspan(begin, n), schema));
  }
  return batches;
}

std::string CorpusStore::export_run_csv(const RunId& run, std::size_t batch_size) const {
  const auto schema = run_schema(run);
  const std::string header = csv_header(schema);
  std::string out = header;
  for (const auto& batch : export_batch(run, batch_size)) out += batch.substr(header.size());
  return out;
}

std::string CorpusStore::allocate_id(const std::string& prefix) {
  std::lock_guard lock(mutex_);
  Statement up(db_,
               "INSERT INTO sequences (prefix, next) VALUES (?, 2) "
               "ON CONFLICT(prefix) DO UPDATE SET next = next + 1 RETURNING next - 1");
  up.bind(1, prefix);
  up.step();
  const std::int64_t n = up.integer(0);
  while (up.step()) {
  }
  return prefix + std::to_string(n);
}

void CorpusStore::put_artifact(const std::string& kind, const std::string& id,
                               const json& body) {
  std::lock_guard lock(mutex_);
  Statement st(db_,
               "INSERT INTO artifacts (kind, id, seq, body) VALUES (?, ?, "
               "(SELECT COALESCE(MAX(seq), 0) + 1 FROM artifacts), ?) "
               "ON CONFLICT(kind, id) DO UPDATE SET body = excluded.body");
  st.bind(1, kind).bind(2, id).bind(3, body.dump());
  st.step();
}

std::optional<json> CorpusStore::get_artifact(const std::string& kind,
                                              const std::string& id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT body FROM artifacts WHERE kind = ? AND id = ?");
  st.bind(1, kind).bind(2, id);
  if (!st.step()) return std::nullopt;
  return json::parse(st.text(0));
}

std::vector<std::pair<std::string, json>> CorpusStore::list_artifacts(
    const std::string& kind) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT id, body FROM artifacts WHERE kind = ? ORDER BY seq");
  st.bind(1, kind);
  std::vector<std::pair<std::string, json>> out;
  while (st.step()) out.emplace_back(st.text(0), json::parse(st.text(1)));
  return out;
}

json to_json(const JudgmentDocument& doc) {
  json j = {{"docId", doc.doc_id},       {"jurisdiction", doc.jurisdiction},
            {"language", doc.language},  {"court", doc.court},
            {"sourceRef", doc.source_ref}, {"body", doc.body}};
  j["decisionDate"] = doc.decision_date ? json(*doc.decision_date) : json(nullptr);
  return j;
}

JudgmentDocument document_from_json(const json& j) {
  JudgmentDocument doc;
  try {
    if (j.contains("docId") && !j["docId"].is_null()) doc.doc_id = DocId(j["docId"].get<std::string>());
    doc.jurisdiction = j.at("jurisdiction").get<std::string>();
    doc.language = j.at("language").get<std::string>();
    doc.court = j.value("court", std::string());
    if (j.contains("decisionDate") && !j["decisionDate"].is_null()) {
      doc.decision_date = j["decisionDate"].get<std::string>();
    }
    doc.source_ref = j.value("sourceRef", std::string());
    doc.body = j.at("body").get<std::string>();
  } catch (const json::exception& e) {
    throw Rejected(std::string("malformed document: ") + e.what());
  }
  return doc;
}

json to_json(const AnalysisRun& run) {
  json j = {{"runId", run.run_id},
            {"profileId", run.profile_id},
            {"profileRevision", run.profile_revision},
            {"temperature", run.temperature},
            {"penaltySettings", run.penalty_settings},
            {"schemaVersion", run.schema_version},
            {"startedAt", format_timestamp(run.started_at)},
            {"status", to_string(run.status)},
            {"calibration", run.calibration},
            {"parameters", run.parameters}};
  j["finishedAt"] = run.finished_at ? json(format_timestamp(*run.finished_at)) : json(nullptr);
  return j;
}

json to_json(const StoredRecord& r) {
  return {{"recordId", r.record_id},
          {"runId", r.run_id},
          {"docId", r.doc_id},
          {"jurisdiction", r.jurisdiction},
          {"language", r.language},
          {"attemptCount", r.attempt_count},
          {"createdAt", format_timestamp(r.created_at)},
          {"record", record_to_json(r.record)}};
}

}  // namespace saap
