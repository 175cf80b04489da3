#include "fixtures.hpp"

#include <iomanip>
#include <sstream>

namespace saap::testing {

const std::vector<UpperRow>& upper_panel() {
  static const std::vector<UpperRow> rows = {
      {8, 2.3, 9, 9, 9, 7},   {8, 2.5, 9, 9, 9, 7},   {8, 2.1, 9, 9, 9, 7},   {9, 2.1, 9, 9, 9, 7},
      {9, 2.5, 9, 9, 9, 8},   {8, 2.5, 9, 9, 9, 8},   {9, 2.5, 9, 9, 9, 9},   {9, 2.5, 9, 9, 9, 9},
      {8, 2.5, 9, 8, 9, 8},   {9, 2.5, 9, 9, 9, 9},   {7.5, 2.3, 9, 9, 9, 8}, {7.5, 2.5, 9, 9, 9, 8},
      {9, 2.5, 9, 9, 9, 6},   {7.5, 2.1, 9, 9, 9, 8}, {9, 2.5, 9, 9, 9, 6},   {8, 2.5, 9, 9, 9, 8},
      {9, 2.5, 9, 9, 9, 8},   {8, 2.5, 9, 9, 9, 8},   {8, 4.5, 9, 9, 9, 8},   {9, 2.3, 9, 9, 9, 9},
      {7.5, 2.5, 9, 9, 9, 8}, {9, 2.3, 9, 9, 9, 9},   {8, 2.1, 9, 9, 9, 8},   {9, 3.2, 8, 9, 9, 8},
      {8, 2.9, 8, 8, 8, 7},
  };
  return rows;
}

const std::vector<LowerRow>& lower_panel() {
  static const std::vector<LowerRow> rows = {
      {0, 0, 30, 70, 0, 0, 0},     {1, 1, 20, 80, 0, 1, 0},    {0, 0, 60, 40, 0, 4, 0},
      {0, 0, 10, 90, 0, 2.5, 0},   {0, 0, 70, 30, 0, 2, 0},    {0, 0, 80, 20, 0, 0, 0},
      {0, 0, 80, 20, 0, 0, 0},     {0, 0, 60, 40, 0, 4, 0},    {0, 0, 20, 70, 10, 2.5, 0},
      {0, 0, 25, 75, 0, 2, 0},     {0, 0, 80, 15, 5, 0, 0},    {0, 0, 30, 70, 0, 2.5, 0},
      {0, 0, 30, 70, 0, 2.5, 0},   {0, 0, 70, 30, 0, 1, 0},    {0, 0, 60, 40, 0, 7, 0},
      {0, 0, 70, 30, 0, 0, 0},     {0, 0, 40, 50, 10, 2, 0},   {0, 0, 60, 40, 0, 1.5, 0},
      {0, 0, 70, 30, 0, 3, 0},     {0, 0, 20, 80, 0, 0, 0},    {0, 0, 10, 90, 0, 0, 0},
      {0, 0, 20, 80, 0, 0, 0},     {1, 1, 20, 80, 0, 1, 0},    {1, 1, 20, 70, 5, 5, 5},
      {0, 0, 20, 80, 0, 2, 0},     {0, 0, 10, 90, 0, 0, 0},    {1, 1, 0, 100, 0, 1, 0},
      {1, 1, 0.1, 99.8, 0.1, 1, 0}, {0, 0, 0, 100, 0, 0, 0},   {1, 1, 0, 100, 0, 1, 0},
      {1, 1, 30, 70, 0, 1, 0},     {0, 0, 0, 100, 0, 0, 0},    {0, 0, 0, 100, 0, 0, 0},
      {1, 1, 0, 100, 0, 1, 0},     {1, 1, 0, 100, 0, 1, 0},
  };
  return rows;
}

AnalysisRecord record_from_rows(const UpperRow& up, const LowerRow& low, int row) {
  const std::string tag = "sample row " + std::to_string(row);
  AnalysisRecord r;
  r.overall_score = up.overall;
  r.hidden_nature_notes = "Implicit emphasis noted in " + tag + ".";
  r.rationales = {{0, "Reasoning summary for " + tag}};
  r.inferences = {{"The court's stance in " + tag + " is inferred from its wording."}};
  r.bias_level = up.bias;
  r.bias_breakdown = {{0, up.bias, "Sole writer"}};
  r.credibility_score = up.credibility;
  r.clarity_score = up.clarity;
  r.inferential_depth_score = up.depth;
  r.item_number = up.number;
  r.level_of_humor = low.humor;
  r.level_of_sarcasm = low.sarcasm;
  r.speech_acts = {low.persuasive, low.declarative, low.inquisitive, low.exclamatory};
  r.context = "Legal judgement";
  r.undertones_score = low.undertones;
  r.undertones_description = "The document is primarily declarative.";
  return r;
}

std::vector<AnalysisRecord> sample_records() {
  std::vector<AnalysisRecord> out;
  for (std::size_t i = 0; i < upper_panel().size(); ++i) {
    out.push_back(record_from_rows(upper_panel()[i], lower_panel()[i], static_cast<int>(i + 1)));
  }
  return out;
}

std::vector<AnalysisRecord> sample_records_extended() {
  std::vector<AnalysisRecord> out;
  for (std::size_t i = 0; i < lower_panel().size(); ++i) {
    out.push_back(record_from_rows(upper_panel()[i % upper_panel().size()], lower_panel()[i],
                                   static_cast<int>(i + 1)));
  }
  return out;
}

std::string first_row_payload() { return to_structured_text(sample_records().front()); }

namespace {

std::string awkward_text(std::mt19937_64& rng) {
  static const std::vector<std::string> parts = {
      "plain", "comma, inside", "\"quoted\"", "line\nbreak", "Kinyarwanda: urukiko",
      "Svenska: domstolen \xc3\xa5\xc3\xa4\xc3\xb6", "\xe6\xb3\x95\xe9\x99\xa2", "tab\there", "  padded  ",
      "trailing\r\n"};
  std::uniform_int_distribution<std::size_t> pick(0, parts.size() - 1);
  std::uniform_int_distribution<int> count(1, 3);
  std::string out;
  for (int i = count(rng); i > 0; --i) out += parts[pick(rng)] + " ";
  return out;
}

}  // namespace

AnalysisRecord random_record(std::mt19937_64& rng, const SchemaConfig& schema) {
  std::uniform_real_distribution<double> score(0.0, 10.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AnalysisRecord r;
  r.overall_score = score(rng);
  r.hidden_nature_notes = awkward_text(rng);
  r.rationales = {{0, awkward_text(rng)}, {1, awkward_text(rng)}};
  r.inferences = {{awkward_text(rng)}};
  r.bias_level = score(rng);
  r.bias_breakdown = {{0, score(rng), awkward_text(rng)}, {3, score(rng), ""}};
  r.credibility_score = score(rng);
  r.clarity_score = score(rng);
  r.inferential_depth_score = score(rng);
  r.item_number = static_cast<std::int64_t>(rng() % 1000);
  r.level_of_humor = score(rng);
  r.level_of_sarcasm = score(rng);
  // Split 100 at three random cut points.
  double cuts[3] = {unit(rng) * 100, unit(rng) * 100, unit(rng) * 100};
  std::sort(std::begin(cuts), std::end(cuts));
  r.speech_acts = {cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], 100 - cuts[2]};
  r.context = awkward_text(rng);
  r.undertones_score = score(rng);
  r.undertones_description = awkward_text(rng);
  for (const auto& spec : schema.field_specs) {
    if (is_core_field(spec.name) || spec.required) continue;
    if (unit(rng) < 0.3) continue;  // optional fields may be absent
    if (spec.kind == FieldKind::kText) {
      r.extensions[spec.name] = awkward_text(rng);
    } else if (spec.kind == FieldKind::kNumeric) {
      r.extensions[spec.name] = spec.min + unit(rng) * (spec.max - spec.min);
    } else {
      r.extensions[spec.name] = nlohmann::json{{"k", awkward_text(rng)}, {"n", score(rng)}};
    }
  }
  return r;
}

JudgmentDocument make_document(const std::string& jurisdiction, const std::string& language,
                               int index, const std::string& body_prefix) {
  JudgmentDocument d;
  d.jurisdiction = jurisdiction;
  d.language = language;
  d.court = jurisdiction + " court";
  d.decision_date = "2023-01-" + std::string(index % 28 + 1 < 10 ? "0" : "") + std::to_string(index % 28 + 1);
  d.source_ref = "fixture://" + jurisdiction + "/" + std::to_string(index);
  d.body = body_prefix + " " + jurisdiction + " #" + std::to_string(index) +
           ". The court considered the submissions and gave its reasons.";
  return d;
}

RunId store_run(CorpusStore& store, const std::vector<AnalysisRecord>& records,
                const std::vector<std::string>& jurisdictions, const SchemaConfig& schema,
                bool calibration) {
  AnalysisRun run;
  run.profile_id = ProfileId("shirley-v1");
  run.profile_revision = 1;
  run.schema_version = schema.version;
  run.calibration = calibration;
  const RunId id = store.create_run(run, schema);
  static int counter = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& j = jurisdictions[i % jurisdictions.size()];
    const DocId doc = store.ingest_document(make_document(j, "en", ++counter, "Stored " + id.str()));
    store.put_record(id, doc, records[i]);
  }
  store.finish_run(id, RunStatus::kComplete);
  return id;
}

std::vector<StoredRecord> as_stored(const std::vector<AnalysisRecord>& records,
                                    const std::vector<std::string>& jurisdictions) {
  std::vector<StoredRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::ostringstream id;
    id << "rec-" << std::setw(8) << std::setfill('0') << (i + 1);
    StoredRecord s;
    s.record_id = RecordId(id.str());
    s.run_id = RunId("R1");
    s.doc_id = DocId("doc-" + std::to_string(i + 1));
    s.record = records[i];
    s.jurisdiction = jurisdictions[i % jurisdictions.size()];
    s.language = "en";
    out.push_back(std::move(s));
  }
  return out;
}

PipelineConfig test_config(std::shared_ptr<Provider> provider) {
  PipelineConfig c;
  c.store_path = ":memory:";
  c.provider = std::move(provider);
  c.gateway.backoff_base = std::chrono::milliseconds(1);
  return c;
}

}  // namespace saap::testing
