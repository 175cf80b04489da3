#include "saap/record_schema.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "saap/util.hpp"

namespace saap {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 19> kCoreFields = {
    field::kOverallScore,     field::kHiddenNatureNotes,
    field::kRationales,       field::kInferences,
    field::kBiasLevel,        field::kBiasBreakdown,
    field::kCredibilityScore, field::kClarityScore,
    field::kInferentialDepthScore, field::kItemNumber,
    field::kLevelOfHumor,     field::kLevelOfSarcasm,
    field::kPersuasive,       field::kDeclarative,
    field::kInquisitive,      field::kContext,
    field::kUndertonesScore,  field::kExclamatory,
    field::kUndertonesDescription,
};

constexpr std::array<std::string_view, 13> kCoreNumeric = {
    field::kOverallScore,     field::kBiasLevel,
    field::kCredibilityScore, field::kClarityScore,
    field::kInferentialDepthScore, field::kItemNumber,
    field::kLevelOfHumor,     field::kLevelOfSarcasm,
    field::kPersuasive,       field::kDeclarative,
    field::kInquisitive,      field::kExclamatory,
    field::kUndertonesScore,
};

constexpr double kSpeechActTolerance = 0.5;

FieldKind core_kind(std::string_view name) {
  if (name == field::kRationales || name == field::kInferences ||
      name == field::kBiasBreakdown) {
    return FieldKind::kStructured;
  }
  if (std::find(kCoreNumeric.begin(), kCoreNumeric.end(), name) !=
      kCoreNumeric.end()) {
    return FieldKind::kNumeric;
  }
  return FieldKind::kText;
}

FieldSpec numeric(std::string_view name, double lo, double hi) {
  return {std::string(name), FieldKind::kNumeric, lo, hi, true};
}
FieldSpec text(std::string_view name) {
  return {std::string(name), FieldKind::kText, 0, 0, true};
}
FieldSpec structured(std::string_view name) {
  return {std::string(name), FieldKind::kStructured, 0, 0, true};
}

std::vector<FieldSpec> core_specs() {
  return {
      numeric(field::kOverallScore, 0, 10),
      text(field::kHiddenNatureNotes),
      structured(field::kRationales),
      structured(field::kInferences),
      numeric(field::kBiasLevel, 0, 10),
      structured(field::kBiasBreakdown),
      numeric(field::kCredibilityScore, 0, 10),
      numeric(field::kClarityScore, 0, 10),
      numeric(field::kInferentialDepthScore, 0, 10),
      numeric(field::kItemNumber, 0, 1e12),
      numeric(field::kLevelOfHumor, 0, 10),
      numeric(field::kLevelOfSarcasm, 0, 10),
      numeric(field::kPersuasive, 0, 100),
      numeric(field::kDeclarative, 0, 100),
      numeric(field::kInquisitive, 0, 100),
      text(field::kContext),
      numeric(field::kUndertonesScore, 0, 10),
      numeric(field::kExclamatory, 0, 100),
      text(field::kUndertonesDescription),
  };
}

SchemaConfig make_schema(std::string version, std::vector<FieldSpec> specs) {
  SchemaConfig schema{std::move(version), std::move(specs), {}};
  for (const auto& s : schema.field_specs) schema.csv_column_order.push_back(s.name);
  return schema;
}

bool valid_identifier(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

std::string observed(const json& j) { return j.dump(); }

// Accumulates violations while a payload is mapped onto a record.
class Collector {
 public:
  void add(std::string_view f, std::string message, std::string seen = {}) {
    report_.violations.push_back({std::string(f), std::move(message), std::move(seen)});
  }
  ValidationReport& report() { return report_; }

  std::optional<double> number(const json& j, std::string_view f) {
    if (!j.is_number()) {
      add(f, "expected a number", observed(j));
      return std::nullopt;
    }
    return j.get<double>();
  }

  std::optional<std::int64_t> integer(const json& j, std::string_view f) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) {
      const double d = j.get<double>();
      if (std::trunc(d) == d && std::abs(d) < 9.0e15) {
        return static_cast<std::int64_t>(d);
      }
    }
    add(f, "expected an integer", observed(j));
    return std::nullopt;
  }

  std::optional<std::string> string(const json& j, std::string_view f) {
    if (!j.is_string()) {
      add(f, "expected text", observed(j));
      return std::nullopt;
    }
    return j.get<std::string>();
  }

  // Checks that `obj` is an object holding exactly `keys`.
  bool object_with(const json& obj, std::string_view f,
                   std::initializer_list<std::string_view> keys) {
    if (!obj.is_object()) {
      add(f, "expected an object", observed(obj));
      return false;
    }
    bool ok = true;
    for (auto k : keys) {
      if (!obj.contains(std::string(k))) {
        add(f, "missing key " + std::string(k), observed(obj));
        ok = false;
      }
    }
    for (const auto& [k, v] : obj.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
        add(f, "unexpected key " + k, observed(obj));
        ok = false;
      }
    }
    return ok;
  }

 private:
  ValidationReport report_;
};

std::vector<Rationale> read_rationales(const json& j, Collector& c) {
  std::vector<Rationale> out;
  const auto f = field::kRationales;
  if (!j.is_array()) {
    c.add(f, "expected a list", observed(j));
    return out;
  }
  for (const auto& item : j) {
    if (!c.object_with(item, f, {"rationaleId", "rationaleContent"})) continue;
    auto id = c.integer(item["rationaleId"], f);
    auto content = c.string(item["rationaleContent"], f);
    if (id && content) out.push_back({*id, *content});
  }
  return out;
}

std::vector<Inference> read_inferences(const json& j, Collector& c) {
  std::vector<Inference> out;
  const auto f = field::kInferences;
  if (!j.is_array()) {
    c.add(f, "expected a list", observed(j));
    return out;
  }
  for (const auto& item : j) {
    if (!c.object_with(item, f, {"inference"})) continue;
    if (auto s = c.string(item["inference"], f)) out.push_back({*s});
  }
  return out;
}

std::vector<BiasBreakdownEntry> read_breakdown(const json& j, Collector& c) {
  std::vector<BiasBreakdownEntry> out;
  const auto f = field::kBiasBreakdown;
  if (!j.is_array()) {
    c.add(f, "expected a list", observed(j));
    return out;
  }
  for (const auto& item : j) {
    if (!c.object_with(item, f, {"writerId", "biasLevel", "note"})) continue;
    auto id = c.integer(item["writerId"], f);
    auto level = c.number(item["biasLevel"], f);
    auto note = c.string(item["note"], f);
    if (id && level && note) out.push_back({*id, *level, *note});
  }
  return out;
}

void check_range(Collector& c, const SchemaConfig& schema, std::string_view name,
                 double value) {
  const FieldSpec* spec = schema.find(name);
  if (spec == nullptr) return;
  if (!(value >= spec->min && value <= spec->max)) {
    c.add(name,
          std::string(name) + " out of range [" + format_number(spec->min) +
              "," + format_number(spec->max) + "]",
          format_number(value));
  }
}

}  // namespace

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::kNumeric: return "numeric";
    case FieldKind::kText: return "text";
    case FieldKind::kStructured: return "structured";
  }
  return "unknown";
}

const FieldSpec* SchemaConfig::find(std::string_view name) const {
  auto it = std::find_if(field_specs.begin(), field_specs.end(),
                         [&](const FieldSpec& s) { return s.name == name; });
  return it == field_specs.end() ? nullptr : &*it;
}

std::span<const std::string_view> core_fields() { return kCoreFields; }
std::span<const std::string_view> core_numeric_fields() { return kCoreNumeric; }

bool is_core_field(std::string_view name) {
  return std::find(kCoreFields.begin(), kCoreFields.end(), name) !=
         kCoreFields.end();
}

SchemaConfig default_schema() {
  auto specs = core_specs();
  specs.push_back({std::string(field::kTruncated), FieldKind::kText, 0, 0, false});
  return make_schema("saap-figure4-v1", std::move(specs));
}

SchemaConfig full_schema() {
  auto specs = core_specs();
  for (int i = static_cast<int>(specs.size()) + 1; i <= 63; ++i) {
    specs.push_back({"extField" + std::to_string(i), FieldKind::kText, 0, 0, false});
  }
  return make_schema("saap-full63-v1", std::move(specs));
}

std::optional<SchemaConfig> builtin_schema(std::string_view version) {
  for (auto schema : {default_schema(), full_schema()}) {
    if (schema.version == version) return schema;
  }
  return std::nullopt;
}

void check_schema(const SchemaConfig& schema) {
  if (schema.version.empty() ||
      schema.version.find_first_not_of(
          "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-.") !=
          std::string::npos) {
    throw ConfigurationError("schema version must be an identifier");
  }
  std::set<std::string> names;
  for (const auto& spec : schema.field_specs) {
    if (!valid_identifier(spec.name)) {
      throw ConfigurationError("invalid field name '" + spec.name + "'");
    }
    if (!names.insert(spec.name).second) {
      throw ConfigurationError("field declared twice: " + spec.name);
    }
    if (spec.kind == FieldKind::kNumeric &&
        !(std::isfinite(spec.min) && std::isfinite(spec.max) && spec.min <= spec.max)) {
      throw ConfigurationError("field " + spec.name + " has an invalid range");
    }
    if (is_core_field(spec.name)) {
      if (spec.kind != core_kind(spec.name)) {
        throw ConfigurationError("field " + spec.name + " must be " +
                                 std::string(to_string(core_kind(spec.name))));
      }
      if (!spec.required) {
        throw ConfigurationError("hard-typed field " + spec.name + " must be required");
      }
    }
  }
  for (auto core : kCoreFields) {
    if (!names.contains(std::string(core))) {
      throw ConfigurationError("schema does not declare " + std::string(core));
    }
  }
  std::set<std::string> columns(schema.csv_column_order.begin(),
                                schema.csv_column_order.end());
  if (columns.size() != schema.csv_column_order.size() || columns != names) {
    throw ConfigurationError(
        "csv column order must list every declared field exactly once");
  }
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const auto& v : violations) {
    out << v.field << ": " << v.message;
    if (!v.observed.empty()) out << " (observed " << v.observed << ")";
    out << '\n';
  }
  return out.str();
}

ValidationReport validate_record(const AnalysisRecord& r, const SchemaConfig& schema) {
  check_schema(schema);
  Collector c;

  check_range(c, schema, field::kOverallScore, r.overall_score);
  check_range(c, schema, field::kBiasLevel, r.bias_level);
  check_range(c, schema, field::kCredibilityScore, r.credibility_score);
  check_range(c, schema, field::kClarityScore, r.clarity_score);
  check_range(c, schema, field::kInferentialDepthScore, r.inferential_depth_score);
  check_range(c, schema, field::kItemNumber, static_cast<double>(r.item_number));
  check_range(c, schema, field::kLevelOfHumor, r.level_of_humor);
  check_range(c, schema, field::kLevelOfSarcasm, r.level_of_sarcasm);
  check_range(c, schema, field::kPersuasive, r.speech_acts.persuasive);
  check_range(c, schema, field::kDeclarative, r.speech_acts.declarative);
  check_range(c, schema, field::kInquisitive, r.speech_acts.inquisitive);
  check_range(c, schema, field::kExclamatory, r.speech_acts.exclamatory);
  check_range(c, schema, field::kUndertonesScore, r.undertones_score);

  const double sum = r.speech_acts.sum();
  if (!(std::abs(sum - 100.0) <= kSpeechActTolerance)) {
    c.add("speechActs", "speechActs sum " + format_number(sum), format_number(sum));
  }

  if (r.bias_level > 0 && r.bias_breakdown.empty()) {
    c.add(field::kBiasBreakdown, "biasBreakdown empty while biasLevel > 0",
          format_number(r.bias_level));
  }
  std::set<std::int64_t> writers;
  const FieldSpec* bias_spec = schema.find(field::kBiasLevel);
  for (const auto& entry : r.bias_breakdown) {
    if (entry.writer_id < 0) {
      c.add(field::kBiasBreakdown, "writerId negative", std::to_string(entry.writer_id));
    }
    if (!writers.insert(entry.writer_id).second) {
      c.add(field::kBiasBreakdown, "duplicate writerId", std::to_string(entry.writer_id));
    }
    if (!(entry.bias_level >= bias_spec->min && entry.bias_level <= bias_spec->max)) {
      c.add(field::kBiasBreakdown, "biasBreakdown biasLevel out of range",
            format_number(entry.bias_level));
    }
  }

  std::set<std::int64_t> rationale_ids;
  for (const auto& rationale : r.rationales) {
    if (!rationale_ids.insert(rationale.rationale_id).second) {
      c.add(field::kRationales, "duplicate rationaleId",
            std::to_string(rationale.rationale_id));
    }
    if (rationale.content.empty()) {
      c.add(field::kRationales, "rationale content empty",
            std::to_string(rationale.rationale_id));
    }
  }
  for (const auto& inference : r.inferences) {
    if (inference.inference.empty()) c.add(field::kInferences, "inference empty");
  }

  for (const auto& [name, value] : r.extensions) {
    const FieldSpec* spec = schema.find(name);
    if (spec == nullptr || is_core_field(name)) {
      c.add(name, "undeclared extension field");
      continue;
    }
    switch (spec->kind) {
      case FieldKind::kNumeric:
        if (const double* d = std::get_if<double>(&value)) {
          check_range(c, schema, name, *d);
        } else {
          c.add(name, "extension must be numeric");
        }
        break;
      case FieldKind::kText:
        if (!std::holds_alternative<std::string>(value)) {
          c.add(name, "extension must be text");
        }
        break;
      case FieldKind::kStructured:
        if (!std::holds_alternative<json>(value)) {
          c.add(name, "extension must be structured");
        }
        break;
    }
  }
  for (const auto& spec : schema.field_specs) {
    if (spec.required && !is_core_field(spec.name) && !r.extensions.contains(spec.name)) {
      c.add(spec.name, "missing required field " + spec.name);
    }
  }
  return std::move(c.report());
}

json record_to_json(const AnalysisRecord& r) {
  json rationales = json::array();
  for (const auto& x : r.rationales) {
    rationales.push_back({{"rationaleId", x.rationale_id}, {"rationaleContent", x.content}});
  }
  json inferences = json::array();
  for (const auto& x : r.inferences) inferences.push_back({{"inference", x.inference}});
  json breakdown = json::array();
  for (const auto& x : r.bias_breakdown) {
    breakdown.push_back(
        {{"writerId", x.writer_id}, {"biasLevel", x.bias_level}, {"note", x.note}});
  }
  json j = {
      {field::kOverallScore, r.overall_score},
      {field::kHiddenNatureNotes, r.hidden_nature_notes},
      {field::kRationales, rationales},
      {field::kInferences, inferences},
      {field::kBiasLevel, r.bias_level},
      {field::kBiasBreakdown, breakdown},
      {field::kCredibilityScore, r.credibility_score},
      {field::kClarityScore, r.clarity_score},
      {field::kInferentialDepthScore, r.inferential_depth_score},
      {field::kItemNumber, r.item_number},
      {field::kLevelOfHumor, r.level_of_humor},
      {field::kLevelOfSarcasm, r.level_of_sarcasm},
      {field::kPersuasive, r.speech_acts.persuasive},
      {field::kDeclarative, r.speech_acts.declarative},
      {field::kInquisitive, r.speech_acts.inquisitive},
      {field::kExclamatory, r.speech_acts.exclamatory},
      {field::kContext, r.context},
      {field::kUndertonesScore, r.undertones_score},
      {field::kUndertonesDescription, r.undertones_description},
  };
  for (const auto& [name, value] : r.extensions) {
    std::visit([&](const auto& v) { j[name] = v; }, value);
  }
  return j;
}

std::string to_structured_text(const AnalysisRecord& record) {
  return record_to_json(record).dump();
}

AnalysisRecord record_from_json(const json& payload, const SchemaConfig& schema,
                                std::string_view raw_text) {
  check_schema(schema);
  Collector c;
  AnalysisRecord r;
  const std::string raw = raw_text.empty() ? payload.dump() : std::string(raw_text);

  if (!payload.is_object()) {
    c.add("<root>", "expected an object", observed(payload));
    throw SchemaViolation("payload is not an object", {{std::move(c.report()), raw}});
  }

  for (const auto& [key, value] : payload.items()) {
    if (schema.find(key) == nullptr) c.add(key, "undeclared field " + key);
  }

  for (const auto& spec : schema.field_specs) {
    auto it = payload.find(spec.name);
    if (it == payload.end()) {
      if (spec.required) c.add(spec.name, "missing required field " + spec.name);
      continue;
    }
    const json& v = *it;
    const std::string_view n = spec.name;
    auto num = [&](double& out) {
      if (auto d = c.number(v, n)) out = *d;
    };
    auto str = [&](std::string& out) {
      if (auto s = c.string(v, n)) out = *s;
    };
    if (n == field::kOverallScore) num(r.overall_score);
    else if (n == field::kHiddenNatureNotes) str(r.hidden_nature_notes);
    else if (n == field::kRationales) r.rationales = read_rationales(v, c);
    else if (n == field::kInferences) r.inferences = read_inferences(v, c);
    else if (n == field::kBiasLevel) num(r.bias_level);
    else if (n == field::kBiasBreakdown) r.bias_breakdown = read_breakdown(v, c);
    else if (n == field::kCredibilityScore) num(r.credibility_score);
    else if (n == field::kClarityScore) num(r.clarity_score);
    else if (n == field::kInferentialDepthScore) num(r.inferential_depth_score);
    else if (n == field::kItemNumber) {
      if (auto i = c.integer(v, n)) r.item_number = *i;
    }
    else if (n == field::kLevelOfHumor) num(r.level_of_humor);
    else if (n == field::kLevelOfSarcasm) num(r.level_of_sarcasm);
    else if (n == field::kPersuasive) num(r.speech_acts.persuasive);
    else if (n == field::kDeclarative) num(r.speech_acts.declarative);
    else if (n == field::kInquisitive) num(r.speech_acts.inquisitive);
    else if (n == field::kExclamatory) num(r.speech_acts.exclamatory);
    else if (n == field::kContext) str(r.context);
    else if (n == field::kUndertonesScore) num(r.undertones_score);
    else if (n == field::kUndertonesDescription) str(r.undertones_description);
    else {
      switch (spec.kind) {
        case FieldKind::kNumeric:
          if (auto d = c.number(v, n)) r.extensions[spec.name] = *d;
          break;
        case FieldKind::kText:
          if (auto s = c.string(v, n)) r.extensions[spec.name] = *s;
          break;
        case FieldKind::kStructured:
          r.extensions[spec.name] = v;
          break;
      }
    }
  }

  if (!c.report().ok()) {
    auto report = std::move(c.report());
    const std::string summary = report.to_string();
    throw SchemaViolation("record does not match schema " + schema.version + ":\n" + summary,
                          {{std::move(report), raw}});
  }
  auto report = validate_record(r, schema);
  if (!report.ok()) {
    const std::string summary = report.to_string();
    throw SchemaViolation("record violates schema " + schema.version + ":\n" + summary,
                          {{std::move(report), raw}});
  }
  return r;
}

AnalysisRecord parse_record(std::string_view text, const SchemaConfig& schema) {
  check_schema(schema);
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw ParseFailure("empty payload", 0);
  }
  json payload;
  try {
    payload = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseFailure(std::string("syntax error: ") + e.what(), e.byte);
  }
  return record_from_json(payload, schema, text);
}

std::optional<double> numeric_field(const AnalysisRecord& r, std::string_view name) {
  if (name == field::kOverallScore) return r.overall_score;
  if (name == field::kBiasLevel) return r.bias_level;
  if (name == field::kCredibilityScore) return r.credibility_score;
  if (name == field::kClarityScore) return r.clarity_score;
  if (name == field::kInferentialDepthScore) return r.inferential_depth_score;
  if (name == field::kItemNumber) return static_cast<double>(r.item_number);
  if (name == field::kLevelOfHumor) return r.level_of_humor;
  if (name == field::kLevelOfSarcasm) return r.level_of_sarcasm;
  if (name == field::kPersuasive) return r.speech_acts.persuasive;
  if (name == field::kDeclarative) return r.speech_acts.declarative;
  if (name == field::kInquisitive) return r.speech_acts.inquisitive;
  if (name == field::kExclamatory) return r.speech_acts.exclamatory;
  if (name == field::kUndertonesScore) return r.undertones_score;
  auto it = r.extensions.find(std::string(name));
  if (it != r.extensions.end()) {
    if (const double* d = std::get_if<double>(&it->second)) return *d;
  }
  return std::nullopt;
}

json schema_to_json(const SchemaConfig& schema) {
  json specs = json::array();
  for (const auto& s : schema.field_specs) {
    json spec = {{"name", s.name}, {"kind", to_string(s.kind)}, {"required", s.required}};
    if (s.kind == FieldKind::kNumeric) {
      spec["min"] = s.min;
      spec["max"] = s.max;
    }
    specs.push_back(std::move(spec));
  }
  return {{"version", schema.version},
          {"fieldSpecs", specs},
          {"csvColumnOrder", schema.csv_column_order}};
}

SchemaConfig schema_from_json(const json& j) {
  try {
    SchemaConfig schema;
    schema.version = j.at("version").get<std::string>();
    for (const auto& s : j.at("fieldSpecs")) {
      FieldSpec spec;
      spec.name = s.at("name").get<std::string>();
      const auto kind = s.at("kind").get<std::string>();
      if (kind == "numeric") spec.kind = FieldKind::kNumeric;
      else if (kind == "text") spec.kind = FieldKind::kText;
      else if (kind == "structured") spec.kind = FieldKind::kStructured;
      else throw ConfigurationError("unknown field kind " + kind);
      spec.required = s.value("required", true);
      spec.min = s.value("min", 0.0);
      spec.max = s.value("max", 0.0);
      schema.field_specs.push_back(std::move(spec));
    }
    schema.csv_column_order = j.at("csvColumnOrder").get<std::vector<std::string>>();
    check_schema(schema);
    return schema;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed schema: ") + e.what());
  }
}

}  // namespace saap
