#include "saap/analyzer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace saap {

namespace {

using json = nlohmann::json;

constexpr std::string_view kElision = "\n[... excerpt omitted ...]\n";

std::string describe_document(const JudgmentDocument& doc, const std::string& body) {
  std::ostringstream out;
  out << "Judgment metadata: jurisdiction " << doc.jurisdiction << "; language " << doc.language;
  if (!doc.court.empty()) out << "; court " << doc.court;
  if (doc.decision_date) out << "; decided " << *doc.decision_date;
  out << ".\n\nJudgment text:\n" << body;
  return out.str();
}

std::string error_code_of(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return std::string(to_string(err->code()));
  return "internal_error";
}

}  // namespace

Excerpt excerpt_document(const std::string& body, std::size_t max_chars, double head_fraction) {
  if (body.size() <= max_chars) return {body, false};
  const std::size_t room = max_chars > kElision.size() ? max_chars - kElision.size() : 0;
  const auto head = static_cast<std::size_t>(std::floor(static_cast<double>(room) * head_fraction));
  const std::size_t tail = room - head;
  return {body.substr(0, head) + std::string(kElision) + body.substr(body.size() - tail), true};
}

std::string analysis_instructions(const SchemaConfig& schema) {
  std::ostringstream out;
  out << "Reply with a single JSON object and nothing else. Fields:\n";
  for (const auto& spec : schema.field_specs) {
    if (spec.name == field::kTruncated) continue;  // set by the pipeline, not the model
    out << "- " << spec.name << " (" << to_string(spec.kind);
    if (spec.kind == FieldKind::kNumeric) {
      out << ", " << format_number(spec.min) << " to " << format_number(spec.max);
    }
    if (!spec.required) out << ", optional";
    out << ")\n";
  }
  out << "rationales is a list of {rationaleId, rationaleContent}; inferences a list of "
         "{inference}; biasBreakdown a list of {writerId, biasLevel, note}. "
         "The four typeLevels percentages must sum to 100.";
  return out.str();
}

CalibrationSpec calibration_spec_from_json(const json& j) {
  CalibrationSpec spec;
  try {
    for (const auto& e : j.at("entries")) {
      CalibrationEntry entry;
      entry.doc_id = e.at("docId").get<DocId>();
      for (const auto& [name, range] : e.at("expectedRanges").items()) {
        if (!range.is_array() || range.size() != 2) {
          throw PreconditionError("expected range for " + name + " must be [lo, hi]");
        }
        entry.expected_ranges[name] = {range[0].get<double>(), range[1].get<double>()};
      }
      spec.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw PreconditionError(std::string("malformed calibration spec: ") + e.what());
  }
  return spec;
}

bool overall_pass(const std::vector<CalibrationResult>& results) {
  return !results.empty() &&
         std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

json to_json(const CalibrationReport& report) {
  json entries = json::array();
  for (const auto& r : report.per_entry) {
    entries.push_back({{"docId", r.doc_id},
                       {"field", r.field},
                       {"observed", r.observed ? json(*r.observed) : json(nullptr)},
                       {"expected", {r.expected.first, r.expected.second}},
                       {"pass", r.pass}});
  }
  return {{"runId", report.run_id}, {"perEntry", entries}, {"overallPass", report.overall_pass}};
}

json to_json(const RepeatabilityReport& report) {
  json fields = json::object();
  for (const auto& [name, s] : report.per_field) {
    fields[name] = {{"maxAbsSpread", s.max_abs_spread}, {"identical", s.identical}};
  }
  return {{"docId", report.doc_id},
          {"temperature", report.temperature},
          {"n", report.n},
          {"perField", fields},
          {"textIdentical", report.text_identical}};
}

Analyzer::Analyzer(CorpusStore& store, Gateway& gateway, SchemaConfig schema,
                   AnalyzerOptions options)
    : store_(store), gateway_(gateway), schema_(std::move(schema)), options_(std::move(options)) {
  check_schema(schema_);
  check_policy(options_.policy);
  if (!(options_.head_fraction >= 0 && options_.head_fraction <= 1)) {
    throw ConfigurationError("head fraction must lie in [0,1]");
  }
}

void Analyzer::emit(const json& event) {
  if (options_.progress == nullptr) return;
  std::lock_guard lock(progress_mutex_);
  *options_.progress << event.dump() << '\n';
}

RunId Analyzer::begin_run(const AgentProfile& profile, bool calibration, int workers) {
  check_profile(profile);
  AnalysisRun run;
  run.profile_id = profile.profile_id;
  run.profile_revision = profile.revision;
  run.temperature = profile.temperature;
  run.penalty_settings = profile.penalty_settings;
  run.schema_version = schema_.version;
  run.calibration = calibration;
  run.parameters = {{"profileName", profile.name},
                    {"systemPrompt", profile.system_prompt},
                    {"knowledgeBaseDocs", profile.knowledge_base_docs},
                    {"maxAttempts", options_.policy.max_attempts},
                    {"documentTokenBudget", options_.document_token_budget},
                    {"headFraction", options_.head_fraction},
                    {"workers", workers}};
  const RunId id = store_.create_run(run, schema_);
  emit({{"event", "run_started"}, {"runId", id}, {"calibration", calibration}});
  return id;
}

Validated<AnalysisRecord> Analyzer::analyze_text(const JudgmentDocument& doc,
                                                 const AgentProfile& profile,
                                                 const CallOptions& call) {
  Excerpt excerpt = excerpt_document(doc.body, options_.document_token_budget * kCharsPerToken,
                                     options_.head_fraction);
  const FieldSpec* flag = schema_.find(field::kTruncated);
  if (excerpt.truncated && (flag == nullptr || flag->kind != FieldKind::kText)) {
    throw ContextOverflow("document " + doc.doc_id.str() + " exceeds the context budget and schema " +
                          schema_.version + " cannot flag an excerpt");
  }
  std::vector<Message> messages = {
      {Role::kUser, describe_document(doc, excerpt.text) + "\n\n" + analysis_instructions(schema_)}};
  try {
    auto result = gateway_.complete_structured(profile, std::move(messages), schema_,
                                               options_.policy, call);
    if (excerpt.truncated) result.value.extensions[std::string(field::kTruncated)] = std::string("true");
    return result;
  } catch (const SchemaViolation& e) {
    throw SchemaViolation("document " + doc.doc_id.str() + ": " + e.what(), e.attempts());
  }
}

StoredRecord Analyzer::analyze_document(const DocId& doc_id, const AgentProfile& profile,
                                        const RunId& run) {
  const JudgmentDocument doc = store_.get_document(doc_id);
  auto result = analyze_text(doc, profile);
  const RecordId id = store_.put_record(run, doc_id, result.value, result.attempt_count);
  emit({{"event", "document_done"},
        {"runId", run},
        {"docId", doc_id},
        {"attempts", result.attempt_count}});
  return store_.get_record(id);
}

StoredRecord Analyzer::analyze_document(const DocId& doc_id, const AgentProfile& profile) {
  store_.get_document(doc_id);  // NotFound before a run is opened
  const RunId run = begin_run(profile);
  try {
    StoredRecord rec = analyze_document(doc_id, profile, run);
    store_.finish_run(run, RunStatus::kComplete);
    return rec;
  } catch (const std::exception& e) {
    store_.record_failure(run, doc_id, error_code_of(e), e.what());
    store_.finish_run(run, RunStatus::kFailed);
    throw;
  }
}

AnalysisRun Analyzer::run_batch(const DocumentFilter& filter, const AgentProfile& profile,
                                int workers) {
  if (workers < 1) throw PreconditionError("workers must be at least 1");
  const auto docs = store_.list_documents(filter);
  if (docs.empty()) throw EmptyCorpus("document filter matches no documents");

  const RunId run = begin_run(profile, false, workers);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < docs.size(); i = next++) {
      const DocId& doc = docs[i].doc_id;
      try {
        analyze_document(doc, profile, run);
      } catch (const std::exception& e) {
        store_.record_failure(run, doc, error_code_of(e), e.what());
        emit({{"event", "document_failed"}, {"runId", run}, {"docId", doc}, {"error", error_code_of(e)}});
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers), docs.size());
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(work);
    work();
  }
  store_.finish_run(run, RunStatus::kComplete);
  emit({{"event", "run_finished"}, {"runId", run}});
  return store_.get_run(run);
}

CalibrationReport Analyzer::run_calibration(const CalibrationSpec& spec,
                                            const AgentProfile& profile) {
  if (spec.entries.empty()) throw PreconditionError("calibration spec has no entries");
  for (const auto& entry : spec.entries) {
    store_.get_document(entry.doc_id);
    if (entry.expected_ranges.empty()) {
      throw PreconditionError("calibration entry for " + entry.doc_id.str() + " has no ranges");
    }
    for (const auto& [name, range] : entry.expected_ranges) {
      const FieldSpec* fs = schema_.find(name);
      if (fs == nullptr || fs->kind != FieldKind::kNumeric) {
        throw PreconditionError("calibration field " + name + " is not numeric in schema " +
                                schema_.version);
      }
      if (range.first > range.second || range.first < fs->min || range.second > fs->max) {
        throw PreconditionError("calibration range for " + name + " lies outside [" +
                                format_number(fs->min) + "," + format_number(fs->max) + "]");
      }
    }
  }

  CalibrationReport report;
  report.run_id = begin_run(profile, true);
  for (const auto& entry : spec.entries) {
    std::optional<AnalysisRecord> record;
    try {
      record = analyze_document(entry.doc_id, profile, report.run_id).record;
    } catch (const Error& e) {
      store_.record_failure(report.run_id, entry.doc_id, std::string(to_string(e.code())), e.what());
    }
    for (const auto& [name, range] : entry.expected_ranges) {
      CalibrationResult r{entry.doc_id, name, std::nullopt, range, false};
      if (record) r.observed = numeric_field(*record, name);
      r.pass = r.observed && *r.observed >= range.first && *r.observed <= range.second;
      report.per_entry.push_back(std::move(r));
    }
  }
  report.overall_pass = overall_pass(report.per_entry);
  store_.finish_run(report.run_id, RunStatus::kComplete);
  return report;
}

RepeatabilityReport Analyzer::run_repeatability(const DocId& doc_id, const AgentProfile& profile,
                                                int n) {
  if (n < 2) throw PreconditionError("repeatability needs n >= 2");
  const JudgmentDocument doc = store_.get_document(doc_id);
  std::vector<AnalysisRecord> records;
  for (int i = 0; i < n; ++i) {
    records.push_back(analyze_text(doc, profile, {static_cast<std::uint64_t>(i), std::nullopt}).value);
  }

  RepeatabilityReport report{doc_id, profile.temperature, n, {}, {}};
  const json first = record_to_json(records.front());
  for (const auto& spec : schema_.field_specs) {
    if (spec.kind == FieldKind::kNumeric) {
      std::optional<double> lo, hi;
      for (const auto& rec : records) {
        const auto v = numeric_field(rec, spec.name);
        if (!v) continue;
        lo = lo ? std::min(*lo, *v) : *v;
        hi = hi ? std::max(*hi, *v) : *v;
      }
      if (!lo) continue;
      const double spread = *hi - *lo;
      report.per_field[spec.name] = {spread, spread == 0};
    } else {
      bool same = true;
      for (const auto& rec : records) {
        const json j = record_to_json(rec);
        const json a = first.contains(spec.name) ? first[spec.name] : json();
        const json b = j.contains(spec.name) ? j[spec.name] : json();
        same = same && a == b;
      }
      report.text_identical[spec.name] = same;
    }
  }
  return report;
}

}  // namespace saap
