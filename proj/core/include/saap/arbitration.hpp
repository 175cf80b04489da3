#pragma once

// SAAP engine: turn-based arbitration of a finding. SHIRLEY (claimant)
// defends it, a CRITIC generated for the case rebuts it, and SARA questions
// both parties and decides with rule citations.
//
// Phases and who may speak:
//   Opening       SARA's request (turn 0, written by open_case)
//   Claim         SHIRLEY's claim
//   Counter       CRITIC's counter
//   Clarification SARA's question to one party
//   Responses     the addressed party's answer
//   Decision      SARA's decision (closes the case) or a further request
//   Closed        verdict present; no more turns

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saap/aggregator.hpp"
#include "saap/llm_gateway.hpp"
#include "saap/profiles.hpp"

namespace saap {

class TurnLimitExceeded : public Error {
 public:
  explicit TurnLimitExceeded(const std::string& message)
      : Error(ErrorCode::kTurnLimitExceeded, message) {}
};

enum class Phase { kOpening, kClaim, kCounter, kClarification, kResponses, kDecision, kClosed };
enum class Speaker { kSara, kShirley, kCritic };
enum class TurnKind { kRequest, kClaim, kCounter, kQuestion, kAnswer, kDecision };

std::string_view to_string(Phase p);
std::string_view to_string(Speaker s);
std::string_view to_string(TurnKind k);
Phase phase_from_string(std::string_view s);
Speaker speaker_from_string(std::string_view s);
TurnKind turn_kind_from_string(std::string_view s);

inline constexpr int kQuestionBudget = 2;
inline constexpr int kDefaultMaxTurns = 24;

struct Turn {
  int index = 0;
  Speaker speaker = Speaker::kSara;
  TurnKind kind = TurnKind::kRequest;
  std::optional<Speaker> addressee;  // questions and requests
  std::string content;
  Timestamp timestamp{};
  Phase phase = Phase::kOpening;  // phase the turn belongs to
  std::string prev_hash;
  std::string hash;  // sha256 over prev_hash and the turn's content fields
};

namespace outcome {
inline constexpr std::string_view kClaimUpheld = "claim_upheld";
inline constexpr std::string_view kClaimRejected = "claim_rejected";
inline constexpr std::string_view kPartiallyUpheld = "partially_upheld";
}  // namespace outcome

struct Verdict {
  std::string outcome;
  std::string rationale;
  std::vector<std::string> rule_citations;
  std::optional<double> bias_assessment;  // 0-10
};

struct ArbitrationCase {
  CaseId case_id;
  Finding finding;
  nlohmann::json evidence;  // bundle captured at opening
  Phase phase = Phase::kOpening;
  std::vector<Turn> transcript;
  std::optional<Verdict> verdict;
  std::map<Speaker, int> question_budget;
  std::optional<std::string> critic_revision;  // profile revision id
  Timestamp opened_at{};
};

nlohmann::json to_json(const Turn& t);
Turn turn_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ArbitrationCase& c);
ArbitrationCase case_from_json(const nlohmann::json& j);

// Human-readable transcript.
std::string transcript_text(const ArbitrationCase& c);

std::string turn_hash(const Turn& t);
// True when every turn's prev_hash/hash pair is consistent.
bool verify_chain(const std::vector<Turn>& transcript);

// Phase after `turn` is taken in phase `current` (`previous` is the turn
// before it, if any), with the question budget updated. Throws InvalidPhase
// for a turn the phase does not allow and BudgetExhausted for a question
// beyond an addressee's budget.
Phase next_phase(Phase current, const Turn* previous, const Turn& turn,
                 std::map<Speaker, int>& budget);

// Case phase after each turn, replayed from the first turn.
std::vector<Phase> replay_phases(const std::vector<Turn>& transcript);

// "Rule <n>" mentions in order of first appearance.
std::vector<std::string> extract_rule_citations(const std::string& text);

// SARA's next move as returned by the model.
struct SaraMove {
  TurnKind kind = TurnKind::kDecision;  // kQuestion, kDecision or kRequest
  std::optional<Speaker> addressee;
  std::string content;
};

// Parses {"action":"question"|"decision"|"request","addressee":...,"content":...}.
// Throws ParseFailure or SchemaViolation.
SaraMove parse_sara_move(const std::string& text);

// Agents are resolved to their latest revision at every turn.
struct ArbitrationProfiles {
  ProfileId shirley{"shirley-v1"};
  ProfileId sara{"sara-v1"};
  ProfileId classifier{"verdict-classifier-v1"};  // structured verdict classification
  double critic_temperature = 0.7;
  std::string critic_instruction;  // prefix of every generated CRITIC prompt
};

class ArbitrationEngine {
 public:
  ArbitrationEngine(CorpusStore& store, Gateway& gateway, ProfileRegistry& registry,
                    ArbitrationProfiles profiles, RepairLoopPolicy policy = {});

  // Throws Rejected for a finding without supporting records.
  ArbitrationCase open_case(const Finding& finding);
  ArbitrationCase get_case(const CaseId& id) const;
  std::vector<ArbitrationCase> list_cases() const;

  // Builds (deterministically) and stores a CRITIC profile for the case.
  AgentProfile generate_critic(const CaseId& id);

  // Appends exactly one turn. On any failure the case is left unchanged.
  ArbitrationCase advance(const CaseId& id);
  ArbitrationCase run_to_completion(const CaseId& id, int max_turns = kDefaultMaxTurns);

  // Classifies a decision text. Throws VerdictParseFailure.
  Verdict parse_verdict(const std::string& decision_text);

  const ArbitrationProfiles& profiles() const { return profiles_; }

 private:
  std::mutex& case_mutex(const CaseId& id);
  void save(const ArbitrationCase& c);
  std::string render_context(const ArbitrationCase& c) const;
  Turn produce_turn(ArbitrationCase& next, std::optional<Verdict>& verdict);
  AgentProfile build_critic(const ArbitrationCase& c);
  AgentProfile critic_for(ArbitrationCase& next);

  CorpusStore& store_;
  Gateway& gateway_;
  ProfileRegistry& registry_;
  ArbitrationProfiles profiles_;
  RepairLoopPolicy policy_;
  std::mutex mutexes_guard_;
  std::map<CaseId, std::unique_ptr<std::mutex>> mutexes_;
};

}  // namespace saap
