#include "saap/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace saap {

namespace {

using json = nlohmann::json;

constexpr double kMadScale = 1.4826;
constexpr double kScoreResolution = 1e-9;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

bool is_numeric_core(std::string_view name) {
  const auto fields = core_numeric_fields();
  return std::find(fields.begin(), fields.end(), name) != fields.end();
}

// Value of `field` on a record; TypeError when the field exists but is not
// numeric.
std::optional<double> value_of(const StoredRecord& rec, std::string_view field) {
  if (is_core_field(field) && !is_numeric_core(field)) {
    throw TypeError("field " + std::string(field) + " is not numeric");
  }
  if (auto it = rec.record.extensions.find(std::string(field)); it != rec.record.extensions.end()) {
    if (!std::holds_alternative<double>(it->second)) {
      throw TypeError("field " + std::string(field) + " is not numeric");
    }
  }
  return numeric_field(rec.record, field);
}

const std::string& group_of(const StoredRecord& rec, std::string_view key) {
  if (key == "jurisdiction") return rec.jurisdiction;
  if (key == "language") return rec.language;
  if (key == "runId") return rec.run_id.str();
  if (key == "docId") return rec.doc_id.str();
  throw KeyError("unknown grouping key " + std::string(key) +
                 " (expected jurisdiction, language, runId or docId)");
}

std::vector<std::string> numeric_field_names(std::span<const StoredRecord> records) {
  std::vector<std::string> names;
  for (auto f : core_numeric_fields()) names.emplace_back(f);
  std::set<std::string> ext;
  for (const auto& r : records) {
    for (const auto& [name, v] : r.record.extensions) {
      if (std::holds_alternative<double>(v)) ext.insert(name);
    }
  }
  names.insert(names.end(), ext.begin(), ext.end());
  return names;
}

std::vector<RecordId> ids_of(std::span<const StoredRecord> records,
                             const std::function<bool(const StoredRecord&)>& keep) {
  std::vector<RecordId> out;
  for (const auto& r : records) {
    if (keep(r)) out.push_back(r.record_id);
  }
  return out;
}

}  // namespace

std::vector<DeviationScore> deviation_rank(std::span<const StoredRecord> records,
                                           std::string_view field) {
  std::vector<DeviationScore> out;
  for (const auto& rec : records) {
    if (auto v = value_of(rec, field)) out.push_back({rec.record_id, std::string(field), *v, 0, 0});
  }
  if (out.empty() && !is_numeric_core(field)) {
    throw TypeError("field " + std::string(field) + " is not a numeric field of these records");
  }
  if (out.size() < 3) {
    throw InsufficientData("deviation ranking needs at least 3 values of " + std::string(field) +
                           ", got " + std::to_string(out.size()));
  }

  std::vector<double> values;
  for (const auto& d : out) values.push_back(d.value);
  // Sorted so the sums below do not depend on input order.
  std::sort(values.begin(), values.end());
  const double med = median_of(values);
  std::vector<double> abs_dev;
  for (double v : values) abs_dev.push_back(std::fabs(v - med));
  const double mad = median_of(abs_dev);

  if (mad > 0) {
    for (auto& d : out) d.score = std::fabs(d.value - med) / (kMadScale * mad);
  } else {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo != *hi) {
      const double n = static_cast<double>(values.size());
      const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
      double ss = 0;
      for (double v : values) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / (n - 1));
      for (auto& d : out) d.score = std::fabs(d.value - mean) / sd;
    }
  }

  // Ranked at a fixed resolution so that scores equal up to rounding noise
  // (mirror-image values around the median, rescaled inputs) tie by id.
  for (auto& d : out) d.score = std::round(d.score / kScoreResolution) * kScoreResolution;
  std::sort(out.begin(), out.end(), [](const DeviationScore& a, const DeviationScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.record_id < b.record_id;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i + 1);
  return out;
}

FieldStats describe(std::vector<double> values) {
  if (values.empty()) throw PreconditionError("no values to describe");
  FieldStats s;
  s.n = values.size();
  std::sort(values.begin(), values.end());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  s.median = median_of(values);
  std::vector<double> abs_dev;
  for (double v : values) abs_dev.push_back(std::fabs(v - s.median));
  s.mad = median_of(std::move(abs_dev));
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

std::vector<CohortStats> cohort_stats(std::span<const StoredRecord> records,
                                      std::string_view group_by) {
  if (records.empty()) throw PreconditionError("cohort statistics need at least one record");
  std::map<std::string, std::vector<const StoredRecord*>> groups;
  for (const auto& r : records) groups[group_of(r, group_by)].push_back(&r);

  const auto names = numeric_field_names(records);
  std::vector<CohortStats> out;
  for (const auto& [value, members] : groups) {
    CohortStats c{std::string(group_by), value, members.size(), {}};
    for (const auto& name : names) {
      std::vector<double> vals;
      for (const auto* r : members) {
        if (auto v = numeric_field(r->record, name)) vals.push_back(*v);
      }
      if (!vals.empty()) c.fields[name] = describe(std::move(vals));
    }
    out.push_back(std::move(c));
  }
  return out;
}

CrossBorderMatrix cross_border_compare(std::span<const StoredRecord> records,
                                       std::string_view field, double threshold) {
  if (!(threshold >= 0)) throw PreconditionError("threshold must be non-negative");
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : records) {
    if (auto v = value_of(r, field)) groups[r.jurisdiction].push_back(*v);
  }
  if (groups.size() < 2) {
    throw InsufficientGroups("cross-border comparison needs at least 2 jurisdictions, got " +
                             std::to_string(groups.size()));
  }
  CrossBorderMatrix m;
  m.field = std::string(field);
  m.threshold = threshold;
  for (auto& [name, vals] : groups) {
    m.groups.push_back(name);
    m.medians.push_back(median_of(std::move(vals)));
  }
  const std::size_t g = m.groups.size();
  m.diff.assign(g, std::vector<double>(g, 0.0));
  m.flagged.assign(g, std::vector<bool>(g, false));
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      m.diff[i][j] = m.medians[i] - m.medians[j];
      m.flagged[i][j] = std::fabs(m.diff[i][j]) > threshold;
    }
  }
  return m;
}

json to_json(const Finding& f) {
  return {{"findingId", f.finding_id},
          {"category", f.category},
          {"severity", f.severity},
          {"narrative", f.narrative},
          {"supportingRecordIds", f.supporting_record_ids},
          {"profileRevision", f.profile_revision},
          {"field", f.field},
          {"facts", f.facts}};
}

Finding finding_from_json(const json& j) {
  try {
    Finding f;
    f.finding_id = j.at("findingId").get<FindingId>();
    f.category = j.at("category").get<std::string>();
    f.severity = j.at("severity").get<double>();
    f.narrative = j.at("narrative").get<std::string>();
    f.supporting_record_ids = j.at("supportingRecordIds").get<std::vector<RecordId>>();
    f.profile_revision = j.at("profileRevision").get<std::string>();
    f.field = j.value("field", std::string());
    f.facts = j.value("facts", json::object());
    return f;
  } catch (const json::exception& e) {
    throw Rejected(std::string("malformed finding: ") + e.what());
  }
}

std::vector<FindingCandidate> select_candidates(std::span<const StoredRecord> records,
                                                std::size_t top_k,
                                                const SelectionOptions& options) {
  std::vector<FindingCandidate> out;
  if (top_k == 0) return out;
  const std::string& field = options.field;

  const auto ranking = deviation_rank(records, field);
  for (std::size_t i = 0; i < std::min(top_k, ranking.size()); ++i) {
    const auto& d = ranking[i];
    out.push_back({std::string(category::kBiasDeviation), d.score, field, {d.record_id},
                   {{"value", d.value}, {"score", d.score}, {"rank", d.rank}}});
  }

  std::set<std::string> jurisdictions;
  for (const auto& r : records) jurisdictions.insert(r.jurisdiction);
  if (jurisdictions.size() < 2) return out;

  const auto m = cross_border_compare(records, field, options.cross_border_threshold);
  std::vector<FindingCandidate> pairs;
  for (std::size_t i = 0; i < m.groups.size(); ++i) {
    for (std::size_t j = i + 1; j < m.groups.size(); ++j) {
      if (!m.flagged[i][j]) continue;
      const auto& a = m.groups[i];
      const auto& b = m.groups[j];
      pairs.push_back({std::string(category::kCrossBorderPatterns), std::fabs(m.diff[i][j]), field,
                       ids_of(records, [&](const StoredRecord& r) {
                         return r.jurisdiction == a || r.jurisdiction == b;
                       }),
                       {{"groups", {a, b}},
                        {"medians", {m.medians[i], m.medians[j]}},
                        {"difference", m.diff[i][j]},
                        {"threshold", m.threshold}}});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& x, const auto& y) { return x.severity > y.severity; });
  if (pairs.size() > top_k) pairs.resize(top_k);
  out.insert(out.end(), pairs.begin(), pairs.end());

  std::vector<double> all;
  for (const auto& r : records) {
    if (auto v = value_of(r, field)) all.push_back(*v);
  }
  const double overall = median_of(all);
  std::vector<FindingCandidate> locations;
  for (std::size_t i = 0; i < m.groups.size(); ++i) {
    const auto& g = m.groups[i];
    locations.push_back({std::string(category::kSameLocations), std::fabs(m.medians[i] - overall),
                         field,
                         ids_of(records, [&](const StoredRecord& r) { return r.jurisdiction == g; }),
                         {{"group", g}, {"groupMedian", m.medians[i]}, {"overallMedian", overall}}});
  }
  std::stable_sort(locations.begin(), locations.end(),
                   [](const auto& x, const auto& y) { return x.severity > y.severity; });
  if (locations.size() > top_k) locations.resize(top_k);
  out.insert(out.end(), locations.begin(), locations.end());
  return out;
}

ComposeResult Aggregator::compose_findings(std::span<const StoredRecord> records,
                                           const AgentProfile& profile, std::size_t top_k,
                                           const SelectionOptions& options) {
  ComposeResult result;
  for (auto& candidate : select_candidates(records, top_k, options)) {
    json evidence = json::array();
    for (const auto& id : candidate.supporting_record_ids) {
      for (const auto& r : records) {
        if (r.record_id == id) evidence.push_back({{"recordId", id}, {"jurisdiction", r.jurisdiction},
                                                   {"record", record_to_json(r.record)}});
      }
    }
    const std::string prompt = "Category: " + candidate.category + "\nField: " + candidate.field +
                               "\nSeverity: " + format_number(candidate.severity) +
                               "\nFacts: " + candidate.facts.dump() +
                               "\nSupporting records: " + evidence.dump() +
                               "\n\nWrite a short narrative describing this finding.";
    try {
      std::string narrative = gateway_.complete(profile, {{Role::kUser, prompt}});
      Finding f;
      f.finding_id = FindingId(store_.allocate_id("F"));
      f.category = candidate.category;
      f.severity = candidate.severity;
      f.narrative = std::move(narrative);
      f.supporting_record_ids = candidate.supporting_record_ids;
      f.profile_revision = profile.revision_id();
      f.field = candidate.field;
      f.facts = candidate.facts;
      store_.put_artifact("finding", f.finding_id.str(), to_json(f));
      result.findings.push_back(std::move(f));
    } catch (const Error& e) {
      result.failures.push_back({std::move(candidate), std::string(to_string(e.code())), e.what()});
    }
  }
  return result;
}

Finding Aggregator::get_finding(const FindingId& id) const {
  auto body = store_.get_artifact("finding", id.str());
  if (!body) throw NotFound("finding " + id.str() + " not found");
  return finding_from_json(*body);
}

std::vector<Finding> Aggregator::list_findings() const {
  std::vector<Finding> out;
  for (const auto& [id, body] : store_.list_artifacts("finding")) out.push_back(finding_from_json(body));
  return out;
}

json Aggregator::evidence_bundle(const FindingId& id) const {
  const Finding f = get_finding(id);
  json records = json::array();
  for (const auto& rid : f.supporting_record_ids) records.push_back(to_json(store_.get_record(rid)));
  return {{"finding", to_json(f)}, {"records", records}};
}

json to_json(const DeviationScore& d) {
  return {{"recordId", d.record_id}, {"field", d.field}, {"value", d.value},
          {"score", d.score},        {"rank", d.rank}};
}

json to_json(const FieldStats& s) {
  return {{"n", s.n},     {"mean", s.mean}, {"median", s.median},
          {"mad", s.mad}, {"min", s.min},   {"max", s.max}};
}

json to_json(const CohortStats& c) {
  json fields = json::object();
  for (const auto& [name, s] : c.fields) fields[name] = to_json(s);
  return {{"groupKey", c.group_key}, {"groupValue", c.group_value}, {"n", c.n}, {"fields", fields}};
}

json to_json(const CrossBorderMatrix& m) {
  return {{"field", m.field},   {"threshold", m.threshold}, {"groups", m.groups},
          {"medians", m.medians}, {"diff", m.diff},         {"flagged", m.flagged}};
}

json to_json(const FindingCandidate& c) {
  return {{"category", c.category},
          {"severity", c.severity},
          {"field", c.field},
          {"supportingRecordIds", c.supporting_record_ids},
          {"facts", c.facts}};
}

json to_json(const ComposeResult& r) {
  json findings = json::array();
  for (const auto& f : r.findings) findings.push_back(to_json(f));
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"candidate", to_json(f.candidate)}, {"code", f.code}, {"message", f.message}});
  }
  return {{"findings", findings}, {"failures", failures}};
}

AgentProfile append_focus_instruction(ProfileRegistry& registry, const ProfileId& id,
                                      const std::string& question) {
  if (question.empty()) throw PreconditionError("focus question is empty");
  AgentProfile next = registry.get(id);
  next.system_prompt = next.system_prompt.empty() ? question : next.system_prompt + "\n\n" + question;
  return registry.add_revision(std::move(next));
}

}  // namespace saap
