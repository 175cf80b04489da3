#pragma once

// All model interaction goes through Gateway: prompt assembly with knowledge
// base attachments, sampling settings, retries, rate limiting, audit logging
// and the structured-output repair loop. Providers are the only code that
// talks to a model endpoint.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saap/profiles.hpp"
#include "saap/record_schema.hpp"

namespace saap {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);

struct Message {
  Role role = Role::kUser;
  std::string content;
  friend bool operator==(const Message&, const Message&) = default;
};

// Stable hash over the canonicalized messages and temperature.
std::string prompt_digest(std::span<const Message> messages, double temperature);

struct CompletionRequest {
  std::string profile_name;
  std::string profile_revision;
  std::vector<Message> messages;  // fully assembled, system context first
  double temperature = 0;
  std::map<std::string, double> penalty_settings;
  std::optional<std::uint64_t> seed;
  std::string digest;
};

class Provider {
 public:
  virtual ~Provider() = default;
  // Throws RetryableError, FatalProviderError or StubMiss.
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Scripted responses for offline runs. Lookup order: exact digest, then the
// first rule whose profile name and substring constraints both match.
struct StubRule {
  std::optional<std::string> profile_name;
  std::optional<std::string> contains;
  std::string response;
};

struct StubScript {
  std::map<std::string, std::string> by_digest;
  std::vector<StubRule> rules;

  bool empty() const { return by_digest.empty() && rules.empty(); }
  static StubScript from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class StubProvider : public Provider {
 public:
  explicit StubProvider(StubScript script) : script_(std::move(script)) {}
  std::string complete(const CompletionRequest& request) override;
  std::string name() const override { return "stub"; }

 private:
  StubScript script_;
};

// Test aid: answers through an arbitrary function of the request.
class ResponderProvider : public Provider {
 public:
  using Responder = std::function<std::string(const CompletionRequest&)>;
  explicit ResponderProvider(Responder responder) : responder_(std::move(responder)) {}
  std::string complete(const CompletionRequest& request) override { return responder_(request); }
  std::string name() const override { return "responder"; }

 private:
  Responder responder_;
};

struct ProviderBinding {
  enum class Kind { kHosted, kStub };
  Kind kind = Kind::kStub;
  std::string endpoint;         // hosted: base URL, e.g. https://api.openai.com/v1
  std::string credentials_ref;  // hosted: name of the environment variable holding the key
  std::string model = "gpt-4-turbo";
  int timeout_seconds = 120;
  StubScript stub_script;
};

// Throws ConfigurationError for an incomplete binding.
void check_binding(const ProviderBinding& binding);
std::shared_ptr<Provider> make_provider(const ProviderBinding& binding);

// Chat-completion client for hosted providers (OpenAI-compatible wire format).
class HostedProvider : public Provider {
 public:
  explicit HostedProvider(ProviderBinding binding);
  std::string complete(const CompletionRequest& request) override;
  std::string name() const override { return "hosted"; }

  // Request body sent for `request`; exposed for wire-format tests.
  nlohmann::json request_body(const CompletionRequest& request) const;

 private:
  ProviderBinding binding_;
  std::string origin_;     // scheme://host[:port]
  std::string base_path_;  // path prefix without trailing slash
};

inline constexpr std::string_view kDefaultFeedbackTemplate =
    "Your previous reply could not be accepted. Problems found:\n{report}\n"
    "Reply again with only the corrected JSON object.";

struct RepairLoopPolicy {
  int max_attempts = 3;
  // "{report}" is replaced by the rejected attempt's validation report.
  std::string feedback_template = std::string(kDefaultFeedbackTemplate);
};

void check_policy(const RepairLoopPolicy& policy);

struct GatewayOptions {
  std::size_t max_in_flight = 4;
  double max_requests_per_second = 0;  // 0 = unlimited
  int max_retries = 2;                 // extra attempts after a retryable failure
  std::chrono::milliseconds backoff_base{250};
  std::size_t knowledge_base_token_budget = 8000;
  std::ostream* audit_log = nullptr;  // line-delimited JSON, one entry per request
};

// Rough token estimate used for budgets: four characters per token.
inline constexpr std::size_t kCharsPerToken = 4;

using DocumentResolver = std::function<std::optional<std::string>(const DocId&)>;

struct CallOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;  // overrides the profile's temperature
};

template <typename T>
struct Validated {
  T value;
  int attempt_count = 0;
  std::string raw_text;
};

class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, GatewayOptions options = {},
          DocumentResolver resolver = {});

  // Sends `messages` under `profile` and returns the provider text verbatim.
  std::string complete(const AgentProfile& profile, std::vector<Message> messages,
                       const CallOptions& options = {});

  // Repair loop: `parse` must throw ParseFailure or SchemaViolation on bad
  // output. Each rejected reply is followed by the feedback template carrying
  // its report. Throws SchemaViolation holding every attempt when exhausted.
  template <typename Parse>
  auto complete_validated(const AgentProfile& profile, std::vector<Message> messages,
                          const RepairLoopPolicy& policy, Parse&& parse,
                          const CallOptions& options = {})
      -> Validated<decltype(parse(std::string()))>;

  Validated<AnalysisRecord> complete_structured(const AgentProfile& profile,
                                                std::vector<Message> messages,
                                                const SchemaConfig& schema,
                                                const RepairLoopPolicy& policy = {},
                                                const CallOptions& options = {});

  // System context (knowledge base documents, then the system prompt)
  // followed by `messages`.
  std::vector<Message> assemble(const AgentProfile& profile,
                                std::vector<Message> messages) const;

  const GatewayOptions& options() const { return options_; }

 private:
  std::string call_provider(const CompletionRequest& request);
  void audit(const nlohmann::json& entry);
  void pace();

  std::shared_ptr<Provider> provider_;
  GatewayOptions options_;
  DocumentResolver resolver_;
  std::counting_semaphore<1024> in_flight_;
  std::mutex pace_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
  std::mutex audit_mutex_;
};

// Turns a parse exception into the report fed back to the model.
ValidationReport report_from_exception(const std::exception& e);

std::string render_feedback(const RepairLoopPolicy& policy, const ValidationReport& report);

template <typename Parse>
auto Gateway::complete_validated(const AgentProfile& profile, std::vector<Message> messages,
                                 const RepairLoopPolicy& policy, Parse&& parse,
                                 const CallOptions& options)
    -> Validated<decltype(parse(std::string()))> {
  check_policy(policy);
  std::vector<FailedAttempt> failures;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    std::string text = complete(profile, messages, options);
    ValidationReport report;
    try {
      return {parse(text), attempt, std::move(text)};
    } catch (const SchemaViolation& e) {
      report = e.report();
    } catch (const ParseFailure& e) {
      report = report_from_exception(e);
    }
    messages.push_back({Role::kAssistant, text});
    messages.push_back({Role::kUser, render_feedback(policy, report)});
    failures.push_back({std::move(report), std::move(text)});
  }
  throw SchemaViolation("no valid reply after " + std::to_string(policy.max_attempts) +
                            " attempts",
                        std::move(failures));
}

// Asks the prompt-engineer profile to turn `intent` into a system prompt and
// stores the result as a new template revision. `strategy_docs` are attached
// as knowledge base documents for the call.
PromptTemplate refine_prompt(Gateway& gateway, ProfileRegistry& registry,
                             const AgentProfile& engineer, const std::string& intent,
                             const std::vector<DocId>& strategy_docs);

}  // namespace saap
