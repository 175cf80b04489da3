#pragma once

// SAM: deviation ranking, cohort statistics and cross-jurisdiction comparison
// over stored records, and narrated findings built on top of them.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saap/corpus_store.hpp"
#include "saap/llm_gateway.hpp"
#include "saap/profiles.hpp"

namespace saap {

struct DeviationScore {
  RecordId record_id;
  std::string field;
  double value = 0;
  double score = 0;
  int rank = 0;
};

// Robust z-score |x - median| / (1.4826 * MAD). When MAD is 0 the score falls
// back to |x - mean| / s (sample standard deviation); when s is 0 every score
// is 0. Scores are rounded to 1e-9; ordered by score descending, ties by
// record id ascending.
// Records without a value for `field` are skipped. Throws InsufficientData
// for fewer than three values and TypeError for a non-numeric field.
std::vector<DeviationScore> deviation_rank(std::span<const StoredRecord> records,
                                           std::string_view field);

struct FieldStats {
  std::size_t n = 0;
  double mean = 0;
  double median = 0;
  double mad = 0;  // raw median absolute deviation (unscaled)
  double min = 0;
  double max = 0;
};

// Stats of a nonempty sample.
FieldStats describe(std::vector<double> values);

struct CohortStats {
  std::string group_key;
  std::string group_value;
  std::size_t n = 0;
  std::map<std::string, FieldStats> fields;  // every numeric field with a value
};

// Supported keys: jurisdiction, language, runId, docId. Groups are ordered by
// value. Throws KeyError for another key, PreconditionError on no records.
std::vector<CohortStats> cohort_stats(std::span<const StoredRecord> records,
                                      std::string_view group_by);

struct CrossBorderMatrix {
  std::string field;
  double threshold = 0;
  std::vector<std::string> groups;           // sorted
  std::vector<double> medians;               // per group
  std::vector<std::vector<double>> diff;     // diff[i][j] = medians[i] - medians[j]
  std::vector<std::vector<bool>> flagged;    // |diff| > threshold
};

inline constexpr double kDefaultCrossBorderThreshold = 0.5;

// Throws InsufficientGroups unless at least two jurisdictions are present.
CrossBorderMatrix cross_border_compare(std::span<const StoredRecord> records,
                                       std::string_view field,
                                       double threshold = kDefaultCrossBorderThreshold);

namespace category {
inline constexpr std::string_view kBiasDeviation = "BiasDeviation";
inline constexpr std::string_view kCrossBorderPatterns = "CrossBorderPatterns";
inline constexpr std::string_view kSameLocations = "SameLocations";
}  // namespace category

struct Finding {
  FindingId finding_id;
  std::string category;  // one of the above or free text for custom findings
  double severity = 0;
  std::string narrative;
  std::vector<RecordId> supporting_record_ids;
  std::string profile_revision;
  std::string field;
  nlohmann::json facts = nlohmann::json::object();
};

nlohmann::json to_json(const Finding& f);
Finding finding_from_json(const nlohmann::json& j);

// A finding before narration.
struct FindingCandidate {
  std::string category;
  double severity = 0;
  std::string field;
  std::vector<RecordId> supporting_record_ids;
  nlohmann::json facts;
};

struct SelectionOptions {
  std::string field = "biasLevel";
  double cross_border_threshold = kDefaultCrossBorderThreshold;
};

// Deterministic candidate selection, at most `top_k` per category:
// the highest deviation scores, the widest flagged cross-border pairs, and
// per-jurisdiction offsets from the overall median (only with two or more
// jurisdictions present).
std::vector<FindingCandidate> select_candidates(std::span<const StoredRecord> records,
                                                std::size_t top_k,
                                                const SelectionOptions& options = {});

struct FindingFailure {
  FindingCandidate candidate;
  std::string code;
  std::string message;
};

struct ComposeResult {
  std::vector<Finding> findings;
  std::vector<FindingFailure> failures;
};

class Aggregator {
 public:
  Aggregator(CorpusStore& store, Gateway& gateway) : store_(store), gateway_(gateway) {}

  // Narrates each candidate through the gateway and persists the finding.
  // A gateway failure is recorded for its candidate; the others continue.
  ComposeResult compose_findings(std::span<const StoredRecord> records, const AgentProfile& profile,
                                 std::size_t top_k, const SelectionOptions& options = {});

  Finding get_finding(const FindingId& id) const;
  std::vector<Finding> list_findings() const;

  // The finding with snapshots of its supporting records, as handed to
  // arbitration.
  nlohmann::json evidence_bundle(const FindingId& id) const;

 private:
  CorpusStore& store_;
  Gateway& gateway_;
};

nlohmann::json to_json(const DeviationScore& d);
nlohmann::json to_json(const FieldStats& s);
nlohmann::json to_json(const CohortStats& c);
nlohmann::json to_json(const CrossBorderMatrix& m);
nlohmann::json to_json(const FindingCandidate& c);
nlohmann::json to_json(const ComposeResult& r);

// New profile revision whose system prompt ends with `question`.
AgentProfile append_focus_instruction(ProfileRegistry& registry, const ProfileId& profile,
                                      const std::string& question);

}  // namespace saap
