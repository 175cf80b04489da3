#pragma once

// Judgment-analysis record: the hard-typed fields an analyzer returns for one
// court decision, plus schema-declared extension fields.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "saap/errors.hpp"

namespace saap {

// Percentages of the judgment's rhetoric by speech act. Should sum to 100.
struct SpeechActProfile {
  double persuasive = 0;
  double declarative = 0;
  double inquisitive = 0;
  double exclamatory = 0;

  double sum() const { return persuasive + declarative + inquisitive + exclamatory; }
  friend bool operator==(const SpeechActProfile&, const SpeechActProfile&) = default;
};

struct BiasBreakdownEntry {
  std::int64_t writer_id = 0;
  double bias_level = 0;
  std::string note;
  friend bool operator==(const BiasBreakdownEntry&, const BiasBreakdownEntry&) = default;
};

struct Rationale {
  std::int64_t rationale_id = 0;
  std::string content;
  friend bool operator==(const Rationale&, const Rationale&) = default;
};

struct Inference {
  std::string inference;
  friend bool operator==(const Inference&, const Inference&) = default;
};

// Numeric, text, or structured (any JSON value) extension cell.
using ExtensionValue = std::variant<double, std::string, nlohmann::json>;

struct AnalysisRecord {
  double overall_score = 0;
  std::string hidden_nature_notes;
  std::vector<Rationale> rationales;
  std::vector<Inference> inferences;
  double bias_level = 0;
  std::vector<BiasBreakdownEntry> bias_breakdown;
  double credibility_score = 0;
  double clarity_score = 0;
  double inferential_depth_score = 0;
  std::int64_t item_number = 0;
  double level_of_humor = 0;
  double level_of_sarcasm = 0;
  SpeechActProfile speech_acts;
  std::string context;
  double undertones_score = 0;
  std::string undertones_description;
  std::map<std::string, ExtensionValue> extensions;

  friend bool operator==(const AnalysisRecord&, const AnalysisRecord&) = default;
};

// Wire names of the hard-typed fields. These are the structured-text keys and
// the CSV header names.
namespace field {
inline constexpr std::string_view kOverallScore = "overallScore";
inline constexpr std::string_view kHiddenNatureNotes = "hiddenNatureNotes";
inline constexpr std::string_view kRationales = "rationales";
inline constexpr std::string_view kInferences = "inferences";
inline constexpr std::string_view kBiasLevel = "biasLevel";
inline constexpr std::string_view kBiasBreakdown = "biasBreakdown";
inline constexpr std::string_view kCredibilityScore = "credibilityScore";
inline constexpr std::string_view kClarityScore = "clarityScore";
inline constexpr std::string_view kInferentialDepthScore = "inferentialDepthScore";
inline constexpr std::string_view kItemNumber = "itemNumber";
inline constexpr std::string_view kLevelOfHumor = "levelOfHumor";
inline constexpr std::string_view kLevelOfSarcasm = "levelOfSarcasm";
inline constexpr std::string_view kPersuasive = "typeLevelsPersuasive";
inline constexpr std::string_view kDeclarative = "typeLevelsDeclarative";
inline constexpr std::string_view kInquisitive = "typeLevelsInquisitive";
inline constexpr std::string_view kExclamatory = "typeLevelsExclamatory";
inline constexpr std::string_view kContext = "context";
inline constexpr std::string_view kUndertonesScore = "undertonesScore";
inline constexpr std::string_view kUndertonesDescription = "undertonesDescription";
// Extension flag set by the analyzer when it worked on an excerpt.
inline constexpr std::string_view kTruncated = "truncated";
}  // namespace field

enum class FieldKind { kNumeric, kText, kStructured };

std::string_view to_string(FieldKind kind);

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::kText;
  double min = 0;
  double max = 0;
  bool required = true;
};

struct SchemaConfig {
  std::string version;
  std::vector<FieldSpec> field_specs;
  std::vector<std::string> csv_column_order;

  const FieldSpec* find(std::string_view name) const;
};

// The nineteen hard-typed fields in their canonical order.
std::span<const std::string_view> core_fields();
// The hard-typed numeric fields (speech acts included).
std::span<const std::string_view> core_numeric_fields();
bool is_core_field(std::string_view name);

// Core fields plus the optional `truncated` flag.
SchemaConfig default_schema();
// Core fields plus 44 optional placeholder extensions, 63 fields in total.
SchemaConfig full_schema();
// Built-in schema by version, or nullopt.
std::optional<SchemaConfig> builtin_schema(std::string_view version);

// Throws ConfigurationError if the schema is malformed.
void check_schema(const SchemaConfig& schema);

struct Violation {
  std::string field;
  std::string message;
  std::string observed;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  // One violation per line: "<field>: <message> (observed <value>)".
  std::string to_string() const;
  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

// One failed attempt at producing a schema-valid record.
struct FailedAttempt {
  ValidationReport report;
  std::string raw_text;
};

class SchemaViolation : public Error {
 public:
  SchemaViolation(const std::string& message, std::vector<FailedAttempt> attempts)
      : Error(ErrorCode::kSchemaViolation, message), attempts_(std::move(attempts)) {}

  const std::vector<FailedAttempt>& attempts() const noexcept { return attempts_; }
  // Report of the last attempt.
  const ValidationReport& report() const { return attempts_.back().report; }

 private:
  std::vector<FailedAttempt> attempts_;
};

ValidationReport validate_record(const AnalysisRecord& record,
                                 const SchemaConfig& schema);

// Throws ParseFailure on syntax errors and SchemaViolation when the payload
// parses but does not describe a valid record.
AnalysisRecord parse_record(std::string_view text, const SchemaConfig& schema);

// Canonical structured-text form (sorted keys, shortest round-trip numbers).
nlohmann::json record_to_json(const AnalysisRecord& record);
std::string to_structured_text(const AnalysisRecord& record);
AnalysisRecord record_from_json(const nlohmann::json& payload,
                                const SchemaConfig& schema,
                                std::string_view raw_text = {});

// Value of a numeric field (hard-typed or numeric extension), if any.
std::optional<double> numeric_field(const AnalysisRecord& record,
                                    std::string_view name);

nlohmann::json schema_to_json(const SchemaConfig& schema);
SchemaConfig schema_from_json(const nlohmann::json& j);

}  // namespace saap
