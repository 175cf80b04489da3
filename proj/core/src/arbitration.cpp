#include "saap/arbitration.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

namespace saap {

namespace {

using json = nlohmann::json;

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table,
            const char* what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  throw Rejected(std::string("unknown ") + what + " " + std::string(s));
}

constexpr std::array<std::pair<Phase, std::string_view>, 7> kPhases = {{
    {Phase::kOpening, "Opening"},
    {Phase::kClaim, "Claim"},
    {Phase::kCounter, "Counter"},
    {Phase::kClarification, "Clarification"},
    {Phase::kResponses, "Responses"},
    {Phase::kDecision, "Decision"},
    {Phase::kClosed, "Closed"},
}};
constexpr std::array<std::pair<Speaker, std::string_view>, 3> kSpeakers = {{
    {Speaker::kSara, "SARA"},
    {Speaker::kShirley, "SHIRLEY"},
    {Speaker::kCritic, "CRITIC"},
}};
constexpr std::array<std::pair<TurnKind, std::string_view>, 6> kKinds = {{
    {TurnKind::kRequest, "request"},
    {TurnKind::kClaim, "claim"},
    {TurnKind::kCounter, "counter"},
    {TurnKind::kQuestion, "question"},
    {TurnKind::kAnswer, "answer"},
    {TurnKind::kDecision, "decision"},
}};

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [v, name] : table) {
    if (v == e) return name;
  }
  return "?";
}

std::map<Speaker, int> full_budget() {
  return {{Speaker::kShirley, kQuestionBudget}, {Speaker::kCritic, kQuestionBudget}};
}

[[noreturn]] void not_allowed(Phase phase, const Turn& t) {
  throw InvalidPhase(std::string(to_string(t.speaker)) + " " + std::string(to_string(t.kind)) +
                     " is not allowed in phase " + std::string(to_string(phase)));
}

SchemaViolation single_violation(const std::string& field, const std::string& message,
                                 const std::string& raw) {
  ValidationReport report;
  report.violations.push_back({field, message, ""});
  return SchemaViolation(message, {FailedAttempt{std::move(report), raw}});
}

json parse_json_reply(const std::string& text) {
  if (text.empty()) throw ParseFailure("empty reply", 0);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseFailure(std::string("reply is not JSON: ") + e.what(), e.byte);
  }
}

ProfileId critic_profile_id(const CaseId& id) { return ProfileId("critic-" + id.str()); }

}  // namespace

std::string_view to_string(Phase p) { return name_of(p, kPhases); }
std::string_view to_string(Speaker s) { return name_of(s, kSpeakers); }
std::string_view to_string(TurnKind k) { return name_of(k, kKinds); }
Phase phase_from_string(std::string_view s) { return enum_from(s, kPhases, "phase"); }
Speaker speaker_from_string(std::string_view s) { return enum_from(s, kSpeakers, "speaker"); }
TurnKind turn_kind_from_string(std::string_view s) { return enum_from(s, kKinds, "turn kind"); }

// --- serialization ------------------------------------------------------

json to_json(const Turn& t) {
  return {{"index", t.index},
          {"speaker", to_string(t.speaker)},
          {"kind", to_string(t.kind)},
          {"addressee", t.addressee ? json(to_string(*t.addressee)) : json(nullptr)},
          {"content", t.content},
          {"timestamp", format_timestamp(t.timestamp)},
          {"phase", to_string(t.phase)},
          {"prevHash", t.prev_hash},
          {"hash", t.hash}};
}

Turn turn_from_json(const json& j) {
  Turn t;
  t.index = j.at("index").get<int>();
  t.speaker = speaker_from_string(j.at("speaker").get<std::string>());
  t.kind = turn_kind_from_string(j.at("kind").get<std::string>());
  if (!j.at("addressee").is_null()) {
    t.addressee = speaker_from_string(j["addressee"].get<std::string>());
  }
  t.content = j.at("content").get<std::string>();
  t.timestamp = parse_timestamp(j.at("timestamp").get<std::string>()).value_or(Timestamp{});
  t.phase = phase_from_string(j.at("phase").get<std::string>());
  t.prev_hash = j.at("prevHash").get<std::string>();
  t.hash = j.at("hash").get<std::string>();
  return t;
}

json to_json(const Verdict& v) {
  return {{"outcome", v.outcome},
          {"rationale", v.rationale},
          {"ruleCitations", v.rule_citations},
          {"biasAssessment", v.bias_assessment ? json(*v.bias_assessment) : json(nullptr)}};
}

Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.outcome = j.at("outcome").get<std::string>();
  v.rationale = j.at("rationale").get<std::string>();
  v.rule_citations = j.at("ruleCitations").get<std::vector<std::string>>();
  if (!j.at("biasAssessment").is_null()) v.bias_assessment = j["biasAssessment"].get<double>();
  return v;
}

json to_json(const ArbitrationCase& c) {
  json transcript = json::array();
  for (const auto& t : c.transcript) transcript.push_back(to_json(t));
  json budget = json::object();
  for (const auto& [s, n] : c.question_budget) budget[std::string(to_string(s))] = n;
  return {{"caseId", c.case_id},
          {"finding", to_json(c.finding)},
          {"evidence", c.evidence},
          {"phase", to_string(c.phase)},
          {"transcript", transcript},
          {"verdict", c.verdict ? to_json(*c.verdict) : json(nullptr)},
          {"questionBudget", budget},
          {"criticRevision", c.critic_revision ? json(*c.critic_revision) : json(nullptr)},
          {"openedAt", format_timestamp(c.opened_at)}};
}

ArbitrationCase case_from_json(const json& j) {
  try {
    ArbitrationCase c;
    c.case_id = j.at("caseId").get<CaseId>();
    c.finding = finding_from_json(j.at("finding"));
    c.evidence = j.at("evidence");
    c.phase = phase_from_string(j.at("phase").get<std::string>());
    for (const auto& t : j.at("transcript")) c.transcript.push_back(turn_from_json(t));
    if (!j.at("verdict").is_null()) c.verdict = verdict_from_json(j["verdict"]);
    for (const auto& [s, n] : j.at("questionBudget").items()) {
      c.question_budget[speaker_from_string(s)] = n.get<int>();
    }
    if (!j.at("criticRevision").is_null()) c.critic_revision = j["criticRevision"].get<std::string>();
    c.opened_at = parse_timestamp(j.at("openedAt").get<std::string>()).value_or(Timestamp{});
    return c;
  } catch (const json::exception& e) {
    throw Rejected(std::string("malformed arbitration case: ") + e.what());
  }
}

std::string transcript_text(const ArbitrationCase& c) {
  std::ostringstream out;
  out << "Case " << c.case_id << " (finding " << c.finding.finding_id << ", " << c.finding.category
      << ")\n";
  for (const auto& t : c.transcript) {
    out << "\n[" << t.index << "] " << to_string(t.speaker) << " (" << to_string(t.kind);
    if (t.addressee) out << " to " << to_string(*t.addressee);
    out << ", " << to_string(t.phase) << ")\n" << t.content << "\n";
  }
  if (c.verdict) {
    out << "\nVerdict: " << c.verdict->outcome;
    if (!c.verdict->rule_citations.empty()) {
      out << " (";
      for (std::size_t i = 0; i < c.verdict->rule_citations.size(); ++i) {
        out << (i ? ", " : "") << c.verdict->rule_citations[i];
      }
      out << ")";
    }
    if (c.verdict->bias_assessment) out << ", bias " << format_number(*c.verdict->bias_assessment);
    out << "\n";
  }
  return out.str();
}

// --- transcript rules ---------------------------------------------------

std::string turn_hash(const Turn& t) {
  json body = to_json(t);
  body.erase("hash");
  body.erase("prevHash");
  return sha256_hex(t.prev_hash + "\n" + body.dump());
}

bool verify_chain(const std::vector<Turn>& transcript) {
  std::string prev;
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    const Turn& t = transcript[i];
    if (t.index != static_cast<int>(i) || t.prev_hash != prev || turn_hash(t) != t.hash) return false;
    prev = t.hash;
  }
  return true;
}

Phase next_phase(Phase current, const Turn* previous, const Turn& t,
                 std::map<Speaker, int>& budget) {
  const bool sara = t.speaker == Speaker::kSara;
  switch (current) {
    case Phase::kOpening:
      if (previous == nullptr) {
        if (sara && t.kind == TurnKind::kRequest) return Phase::kOpening;
      } else if (t.speaker == Speaker::kShirley && t.kind == TurnKind::kClaim) {
        return Phase::kClaim;
      }
      break;
    case Phase::kClaim:
      if (t.speaker == Speaker::kCritic && t.kind == TurnKind::kCounter) return Phase::kCounter;
      break;
    case Phase::kCounter:
    case Phase::kResponses:
      if (sara && t.kind == TurnKind::kQuestion) {
        if (!t.addressee || *t.addressee == Speaker::kSara) {
          throw InvalidPhase("a question must be addressed to SHIRLEY or CRITIC");
        }
        int& left = budget[*t.addressee];
        if (left <= 0) {
          throw BudgetExhausted("no questions left for " + std::string(to_string(*t.addressee)));
        }
        --left;
        return Phase::kClarification;
      }
      [[fallthrough]];
    case Phase::kDecision:
      if (sara && t.kind == TurnKind::kDecision) return Phase::kClosed;
      if (sara && t.kind == TurnKind::kRequest) return Phase::kDecision;
      break;
    case Phase::kClarification:
      if (t.kind == TurnKind::kAnswer && previous && previous->addressee &&
          t.speaker == *previous->addressee) {
        return Phase::kResponses;
      }
      break;
    case Phase::kClosed:
      throw InvalidPhase("case is closed");
  }
  not_allowed(current, t);
}

std::vector<Phase> replay_phases(const std::vector<Turn>& transcript) {
  std::vector<Phase> out;
  Phase phase = Phase::kOpening;
  auto budget = full_budget();
  const Turn* previous = nullptr;
  for (const auto& t : transcript) {
    phase = next_phase(phase, previous, t, budget);
    out.push_back(phase);
    previous = &t;
  }
  return out;
}

std::vector<std::string> extract_rule_citations(const std::string& text) {
  static const std::regex rule(R"(\bRule\s+(\d+))");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), rule); it != std::sregex_iterator();
       ++it) {
    std::string cite = "Rule " + (*it)[1].str();
    if (std::find(out.begin(), out.end(), cite) == out.end()) out.push_back(std::move(cite));
  }
  return out;
}

SaraMove parse_sara_move(const std::string& text) {
  const json j = parse_json_reply(text);
  if (!j.is_object()) throw single_violation("$", "reply must be a JSON object", text);
  const std::string action = j.value("action", std::string());
  SaraMove move;
  if (action == "question") {
    move.kind = TurnKind::kQuestion;
  } else if (action == "decision") {
    move.kind = TurnKind::kDecision;
  } else if (action == "request") {
    move.kind = TurnKind::kRequest;
  } else {
    throw single_violation("action", "action must be question, decision or request", text);
  }
  if (!j.contains("content") || !j["content"].is_string() ||
      j["content"].get<std::string>().empty()) {
    throw single_violation("content", "content must be a nonempty string", text);
  }
  move.content = j["content"].get<std::string>();
  if (j.contains("addressee") && j["addressee"].is_string()) {
    const auto who = j["addressee"].get<std::string>();
    if (who == "SHIRLEY") {
      move.addressee = Speaker::kShirley;
    } else if (who == "CRITIC") {
      move.addressee = Speaker::kCritic;
    } else {
      throw single_violation("addressee", "addressee must be SHIRLEY or CRITIC", text);
    }
  }
  if (move.kind == TurnKind::kQuestion && !move.addressee) {
    throw single_violation("addressee", "a question needs an addressee", text);
  }
  return move;
}

// --- engine -------------------------------------------------------------

ArbitrationEngine::ArbitrationEngine(CorpusStore& store, Gateway& gateway,
                                     ProfileRegistry& registry, ArbitrationProfiles profiles,
                                     RepairLoopPolicy policy)
    : store_(store),
      gateway_(gateway),
      registry_(registry),
      profiles_(std::move(profiles)),
      policy_(std::move(policy)) {
  check_policy(policy_);
}

std::mutex& ArbitrationEngine::case_mutex(const CaseId& id) {
  std::lock_guard lock(mutexes_guard_);
  auto& m = mutexes_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

void ArbitrationEngine::save(const ArbitrationCase& c) {
  store_.put_artifact("case", c.case_id.str(), to_json(c));
}

ArbitrationCase ArbitrationEngine::open_case(const Finding& finding) {
  if (finding.supporting_record_ids.empty()) {
    throw Rejected("finding " + finding.finding_id.str() + " has no supporting records");
  }
  ArbitrationCase c;
  c.case_id = CaseId(store_.allocate_id("C"));
  c.finding = finding;
  json records = json::array();
  for (const auto& id : finding.supporting_record_ids) records.push_back(to_json(store_.get_record(id)));
  c.evidence = {{"finding", to_json(finding)}, {"records", records}};
  c.question_budget = full_budget();
  c.opened_at = now_ms();

  Turn t;
  t.index = 0;
  t.speaker = Speaker::kSara;
  t.kind = TurnKind::kRequest;
  t.addressee = Speaker::kShirley;
  t.content = "This case concerns the following " + finding.category +
              " finding:\n\n" + finding.narrative +
              "\n\nSHIRLEY, set out your claim in full, with the passages of the judgment and the "
              "analysis records that support it.";
  t.timestamp = now_ms();
  t.phase = Phase::kOpening;
  t.hash = turn_hash(t);
  c.transcript.push_back(std::move(t));
  save(c);
  return c;
}

ArbitrationCase ArbitrationEngine::get_case(const CaseId& id) const {
  auto body = store_.get_artifact("case", id.str());
  if (!body) throw NotFound("arbitration case " + id.str() + " not found");
  return case_from_json(*body);
}

std::vector<ArbitrationCase> ArbitrationEngine::list_cases() const {
  std::vector<ArbitrationCase> out;
  for (const auto& [id, body] : store_.list_artifacts("case")) out.push_back(case_from_json(body));
  return out;
}

AgentProfile ArbitrationEngine::build_critic(const ArbitrationCase& c) {
  if (c.phase == Phase::kClosed) throw InvalidPhase("case " + c.case_id.str() + " is closed");
  AgentProfile p;
  p.profile_id = critic_profile_id(c.case_id);
  p.name = "CRITIC";
  p.temperature = profiles_.critic_temperature;
  p.system_prompt = profiles_.critic_instruction + "\n\nFinding under dispute (" + c.finding.category +
                    ", severity " + format_number(c.finding.severity) + "):\n" +
                    c.finding.narrative + "\n\nSupporting records:\n" +
                    c.evidence.at("records").dump(2);
  if (registry_.find(p.profile_id)) return registry_.add_revision(std::move(p));
  return registry_.create(std::move(p));
}

AgentProfile ArbitrationEngine::generate_critic(const CaseId& id) {
  std::lock_guard lock(case_mutex(id));
  ArbitrationCase c = get_case(id);
  AgentProfile p = build_critic(c);
  c.critic_revision = p.revision_id();
  save(c);
  return p;
}

AgentProfile ArbitrationEngine::critic_for(ArbitrationCase& next) {
  if (next.critic_revision) {
    const auto& rev = *next.critic_revision;
    const auto at = rev.rfind('@');
    return registry_.get(ProfileId(rev.substr(0, at)), std::stoi(rev.substr(at + 1)));
  }
  AgentProfile p = build_critic(next);
  next.critic_revision = p.revision_id();
  return p;
}

std::string ArbitrationEngine::render_context(const ArbitrationCase& c) const {
  std::ostringstream out;
  out << "Arbitration case " << c.case_id << ".\nFinding (" << c.finding.category << "):\n"
      << c.finding.narrative << "\n\nEvidence:\n" << c.evidence.at("records").dump() << "\n\nTranscript so far:\n";
  for (const auto& t : c.transcript) {
    out << "\n" << to_string(t.speaker) << " (" << to_string(t.kind);
    if (t.addressee) out << " to " << to_string(*t.addressee);
    out << "):\n" << t.content << "\n";
  }
  return out.str();
}

Turn ArbitrationEngine::produce_turn(ArbitrationCase& next, std::optional<Verdict>& verdict) {
  const std::string context = render_context(next);
  const Turn& last = next.transcript.back();
  Turn t;
  switch (next.phase) {
    case Phase::kOpening:
      t.speaker = Speaker::kShirley;
      t.kind = TurnKind::kClaim;
      t.content = gateway_.complete(
          registry_.get(profiles_.shirley), {{Role::kUser, context + "\nSARA has asked you to present your claim. Present it now."}});
      break;
    case Phase::kClaim: {
      const AgentProfile critic = critic_for(next);
      t.speaker = Speaker::kCritic;
      t.kind = TurnKind::kCounter;
      t.content = gateway_.complete(
          critic, {{Role::kUser, context + "\nRebut SHIRLEY's claim."}});
      break;
    }
    case Phase::kClarification: {
      const Speaker who = last.addressee.value_or(Speaker::kShirley);
      t.speaker = who;
      t.kind = TurnKind::kAnswer;
      const std::string ask = context + "\nAnswer SARA's question.";
      t.content = who == Speaker::kShirley
                      ? gateway_.complete(registry_.get(profiles_.shirley), {{Role::kUser, ask}})
                      : gateway_.complete(critic_for(next), {{Role::kUser, ask}});
      break;
    }
    case Phase::kCounter:
    case Phase::kResponses:
    case Phase::kDecision: {
      std::ostringstream ask;
      ask << context << "\nQuestions remaining: SHIRLEY " << next.question_budget[Speaker::kShirley]
          << ", CRITIC " << next.question_budget[Speaker::kCritic] << ".\n";
      if (next.phase == Phase::kDecision) ask << "The hearing is over; you must now decide.\n";
      ask << "Reply with a JSON object {\"action\": \"question\" | \"decision\" | \"request\", "
             "\"addressee\": \"SHIRLEY\" | \"CRITIC\", \"content\": text}. A decision must "
             "include a judgment that cites the rules it relies on.";
      const auto move = gateway_.complete_validated(registry_.get(profiles_.sara), {{Role::kUser, ask.str()}},
                                                    policy_, parse_sara_move);
      t.speaker = Speaker::kSara;
      t.kind = move.value.kind;
      t.addressee = move.value.addressee;
      t.content = move.value.content;
      if (t.kind == TurnKind::kDecision) verdict = parse_verdict(t.content);
      break;
    }
    case Phase::kClosed:
      throw InvalidPhase("case " + next.case_id.str() + " is closed");
  }
  return t;
}

ArbitrationCase ArbitrationEngine::advance(const CaseId& id) {
  std::lock_guard lock(case_mutex(id));
  ArbitrationCase next = get_case(id);
  if (next.phase == Phase::kClosed) throw InvalidPhase("case " + id.str() + " is closed");

  std::optional<Verdict> verdict;
  Turn t = produce_turn(next, verdict);
  auto budget = next.question_budget;
  const Phase phase = next_phase(next.phase, &next.transcript.back(), t, budget);

  t.index = static_cast<int>(next.transcript.size());
  t.timestamp = now_ms();
  t.phase = phase == Phase::kClosed ? Phase::kDecision : phase;
  t.prev_hash = next.transcript.back().hash;
  t.hash = turn_hash(t);

  next.transcript.push_back(std::move(t));
  next.phase = phase;
  next.question_budget = std::move(budget);
  if (phase == Phase::kClosed) next.verdict = std::move(verdict);
  save(next);
  return next;
}

ArbitrationCase ArbitrationEngine::run_to_completion(const CaseId& id, int max_turns) {
  if (max_turns < 1) throw PreconditionError("maxTurns must be at least 1");
  for (;;) {
    ArbitrationCase c = get_case(id);
    if (c.phase == Phase::kClosed) return c;
    if (static_cast<int>(c.transcript.size()) >= max_turns) {
      throw TurnLimitExceeded("case " + id.str() + " reached " + std::to_string(max_turns) +
                              " turns without a decision");
    }
    advance(id);
  }
}

Verdict ArbitrationEngine::parse_verdict(const std::string& decision_text) {
  if (decision_text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw VerdictParseFailure("decision text is empty", decision_text);
  }
  const auto cited = extract_rule_citations(decision_text);
  const std::string ask =
      "Classify the arbitration decision below.\nReply with a JSON object {\"outcome\": "
      "\"claim_upheld\" | \"claim_rejected\" | \"partially_upheld\", \"biasAssessment\": number "
      "0-10 or null if the decision states none, \"ruleCitations\": [text]}.\n\nDecision:\n" +
      decision_text;

  auto parse = [&](const std::string& text) {
    const json j = parse_json_reply(text);
    if (!j.is_object()) throw single_violation("$", "reply must be a JSON object", text);
    Verdict v;
    v.outcome = j.value("outcome", std::string());
    if (v.outcome != outcome::kClaimUpheld && v.outcome != outcome::kClaimRejected &&
        v.outcome != outcome::kPartiallyUpheld) {
      throw single_violation("outcome", "outcome must be claim_upheld, claim_rejected or partially_upheld", text);
    }
    if (j.contains("biasAssessment") && !j["biasAssessment"].is_null()) {
      if (!j["biasAssessment"].is_number()) {
        throw single_violation("biasAssessment", "biasAssessment must be a number or null", text);
      }
      const double b = j["biasAssessment"].get<double>();
      if (!(b >= 0 && b <= 10)) throw single_violation("biasAssessment", "biasAssessment out of range [0,10]", text);
      v.bias_assessment = b;
    }
    v.rule_citations = cited;
    if (j.contains("ruleCitations")) {
      if (!j["ruleCitations"].is_array()) {
        throw single_violation("ruleCitations", "ruleCitations must be a list", text);
      }
      for (const auto& r : j["ruleCitations"]) {
        if (!r.is_string()) throw single_violation("ruleCitations", "citations must be text", text);
        const auto s = r.get<std::string>();
        if (!s.empty() && std::find(v.rule_citations.begin(), v.rule_citations.end(), s) == v.rule_citations.end()) {
          v.rule_citations.push_back(s);
        }
      }
    }
    if (v.rule_citations.empty()) throw single_violation("ruleCitations", "no rule citations found", text);
    v.rationale = decision_text;
    return v;
  };

  try {
    return gateway_.complete_validated(registry_.get(profiles_.classifier), {{Role::kUser, ask}}, policy_, parse).value;
  } catch (const SchemaViolation& e) {
    throw VerdictParseFailure(std::string("decision could not be classified: ") + e.what(), decision_text);
  }
}

}  // namespace saap
