#include "saap/llm_gateway.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "saap/util.hpp"

namespace saap {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

json messages_json(std::span<const Message> messages) {
  json out = json::array();
  for (const auto& m : messages) {
    out.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return out;
}

void replace_all(std::string& text, std::string_view from, std::string_view to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos;
       pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
}

std::string last_user_content(const CompletionRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == Role::kUser) return it->content;
  }
  return {};
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

std::string prompt_digest(std::span<const Message> messages, double temperature) {
  // Numbers go through format_number so the digest does not depend on the
  // json library's float printing.
  const json canonical = {{"messages", messages_json(messages)},
                          {"temperature", format_number(temperature)}};
  return sha256_hex(canonical.dump());
}

// --- stub ---------------------------------------------------------------

StubScript StubScript::from_json(const json& j) {
  StubScript s;
  try {
    if (j.contains("byDigest")) {
      s.by_digest = j["byDigest"].get<std::map<std::string, std::string>>();
    }
    if (j.contains("rules")) {
      for (const auto& r : j["rules"]) {
        StubRule rule;
        if (r.contains("profile")) rule.profile_name = r["profile"].get<std::string>();
        if (r.contains("contains")) rule.contains = r["contains"].get<std::string>();
        const auto& resp = r.at("response");
        rule.response = resp.is_string() ? resp.get<std::string>() : resp.dump();
        s.rules.push_back(std::move(rule));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed stub script: ") + e.what());
  }
  return s;
}

json StubScript::to_json() const {
  json rules_j = json::array();
  for (const auto& r : rules) {
    json entry = {{"response", r.response}};
    if (r.profile_name) entry["profile"] = *r.profile_name;
    if (r.contains) entry["contains"] = *r.contains;
    rules_j.push_back(std::move(entry));
  }
  return {{"byDigest", by_digest}, {"rules", rules_j}};
}

std::string StubProvider::complete(const CompletionRequest& request) {
  if (auto it = script_.by_digest.find(request.digest); it != script_.by_digest.end()) {
    return it->second;
  }
  const std::string user = last_user_content(request);
  for (const auto& rule : script_.rules) {
    if (rule.profile_name && *rule.profile_name != request.profile_name) continue;
    if (rule.contains && user.find(*rule.contains) == std::string::npos) continue;
    return rule.response;
  }
  throw StubMiss(request.digest);
}

// --- hosted -------------------------------------------------------------

HostedProvider::HostedProvider(ProviderBinding binding) : binding_(std::move(binding)) {
  check_binding(binding_);
  const auto scheme_end = binding_.endpoint.find("://");
  const auto path_start = binding_.endpoint.find('/', scheme_end + 3);
  origin_ = binding_.endpoint.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : binding_.endpoint.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

json HostedProvider::request_body(const CompletionRequest& request) const {
  json body = {{"model", binding_.model},
               {"messages", messages_json(request.messages)},
               {"temperature", request.temperature}};
  for (const auto& [name, value] : request.penalty_settings) body[name] = value;
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

std::string HostedProvider::complete(const CompletionRequest& request) {
  const char* key = std::getenv(binding_.credentials_ref.c_str());
  if (key == nullptr || *key == '\0') {
    throw FatalProviderError("credential variable " + binding_.credentials_ref + " is not set");
  }
  httplib::Client client(origin_);
  client.set_connection_timeout(binding_.timeout_seconds, 0);
  client.set_read_timeout(binding_.timeout_seconds, 0);
  client.set_write_timeout(binding_.timeout_seconds, 0);
  client.set_bearer_token_auth(key);

  auto res = client.Post(base_path_ + "/chat/completions", request_body(request).dump(),
                         "application/json");
  if (!res) {
    throw RetryableError("transport failure: " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw FatalProviderError("authentication rejected (HTTP " + std::to_string(status) + ")");
  }
  if (status == 408 || status == 409 || status == 429 || status >= 500) {
    throw RetryableError("provider returned HTTP " + std::to_string(status));
  }
  if (status != 200) {
    throw FatalProviderError("provider returned HTTP " + std::to_string(status) + ": " +
                             res->body.substr(0, 200));
  }
  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw FatalProviderError(std::string("unexpected provider reply: ") + e.what());
  }
}

void check_binding(const ProviderBinding& b) {
  if (b.kind == ProviderBinding::Kind::kHosted) {
    if (b.endpoint.empty()) throw ConfigurationError("hosted provider requires an endpoint");
    if (b.endpoint.rfind("http://", 0) != 0 && b.endpoint.rfind("https://", 0) != 0) {
      throw ConfigurationError("endpoint must be an http(s) URL: " + b.endpoint);
    }
    if (b.credentials_ref.empty()) {
      throw ConfigurationError("hosted provider requires a credentials variable name");
    }
  } else if (b.stub_script.empty()) {
    throw ConfigurationError("stub provider requires a script");
  }
}

std::shared_ptr<Provider> make_provider(const ProviderBinding& binding) {
  check_binding(binding);
  if (binding.kind == ProviderBinding::Kind::kHosted) {
    return std::make_shared<HostedProvider>(binding);
  }
  return std::make_shared<StubProvider>(binding.stub_script);
}

// --- gateway ------------------------------------------------------------

void check_policy(const RepairLoopPolicy& policy) {
  if (policy.max_attempts < 1) throw PreconditionError("maxAttempts must be at least 1");
}

ValidationReport report_from_exception(const std::exception& e) {
  if (const auto* sv = dynamic_cast<const SchemaViolation*>(&e)) return sv->report();
  ValidationReport report;
  if (const auto* pf = dynamic_cast<const ParseFailure*>(&e)) {
    report.violations.push_back(
        {"$", std::string("not parseable: ") + pf->what(), "byte " + std::to_string(pf->position())});
  } else {
    report.violations.push_back({"$", e.what(), ""});
  }
  return report;
}

std::string render_feedback(const RepairLoopPolicy& policy, const ValidationReport& report) {
  std::string text = policy.feedback_template;
  replace_all(text, "{report}", report.to_string());
  return text;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayOptions options,
                 DocumentResolver resolver)
    : provider_(std::move(provider)),
      options_(options),
      resolver_(std::move(resolver)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options.max_in_flight, 1, 1024))) {
  if (!provider_) throw ConfigurationError("gateway has no provider");
}

std::vector<Message> Gateway::assemble(const AgentProfile& profile,
                                       std::vector<Message> messages) const {
  std::string system;
  std::size_t budget = options_.knowledge_base_token_budget * kCharsPerToken;
  for (const auto& id : profile.knowledge_base_docs) {
    std::optional<std::string> body = resolver_ ? resolver_(id) : std::nullopt;
    if (!body) throw NotFound("knowledge base document " + id.str() + " not resolvable");
    if (budget == 0) break;
    // Kept from the start; whatever does not fit is dropped from the tail.
    std::string part = body->size() > budget ? body->substr(0, budget) : *body;
    budget -= part.size();
    system += "[Knowledge base: " + id.str() + "]\n" + part + "\n\n";
  }
  system += profile.system_prompt;

  std::vector<Message> out;
  out.reserve(messages.size() + 1);
  if (!system.empty()) out.push_back({Role::kSystem, std::move(system)});
  for (auto& m : messages) out.push_back(std::move(m));
  return out;
}

void Gateway::pace() {
  if (options_.max_requests_per_second <= 0) return;
  const auto interval = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(1.0 / options_.max_requests_per_second));
  Clock::time_point slot;
  {
    std::lock_guard lock(pace_mutex_);
    slot = std::max(Clock::now(), next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

void Gateway::audit(const json& entry) {
  if (options_.audit_log == nullptr) return;
  std::lock_guard lock(audit_mutex_);
  *options_.audit_log << entry.dump() << '\n';
  options_.audit_log->flush();
}

std::string Gateway::call_provider(const CompletionRequest& request) {
  for (int attempt = 0;; ++attempt) {
    pace();
    in_flight_.acquire();
    const auto start = Clock::now();
    json entry = {{"digest", request.digest},
                  {"profile", request.profile_revision},
                  {"temperature", request.temperature},
                  {"attempt", attempt + 1},
                  {"provider", provider_->name()}};
    if (request.seed) entry["seed"] = *request.seed;
    try {
      std::string text = provider_->complete(request);
      in_flight_.release();
      entry["latencyMs"] =
          std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
      entry["outcome"] = "ok";
      audit(entry);
      return text;
    } catch (const Error& e) {
      in_flight_.release();
      entry["latencyMs"] =
          std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
      entry["outcome"] = std::string(to_string(e.code()));
      audit(entry);
      if (e.code() != ErrorCode::kRetryable || attempt >= options_.max_retries) throw;
    } catch (...) {
      in_flight_.release();
      throw;
    }
    std::this_thread::sleep_for(options_.backoff_base * (1 << std::min(attempt, 10)));
  }
}

std::string Gateway::complete(const AgentProfile& profile, std::vector<Message> messages,
                              const CallOptions& options) {
  CompletionRequest request;
  request.profile_name = profile.name;
  request.profile_revision = profile.revision_id();
  request.temperature = options.temperature.value_or(profile.temperature);
  request.penalty_settings = profile.penalty_settings;
  request.seed = options.seed;
  request.messages = assemble(profile, std::move(messages));
  request.digest = prompt_digest(request.messages, request.temperature);
  return call_provider(request);
}

Validated<AnalysisRecord> Gateway::complete_structured(const AgentProfile& profile,
                                                       std::vector<Message> messages,
                                                       const SchemaConfig& schema,
                                                       const RepairLoopPolicy& policy,
                                                       const CallOptions& options) {
  return complete_validated(
      profile, std::move(messages), policy,
      [&schema](const std::string& text) { return parse_record(text, schema); }, options);
}

PromptTemplate refine_prompt(Gateway& gateway, ProfileRegistry& registry,
                             const AgentProfile& engineer, const std::string& intent,
                             const std::vector<DocId>& strategy_docs) {
  if (intent.empty()) throw PreconditionError("intent is empty");
  AgentProfile call_profile = engineer;
  for (const auto& doc : strategy_docs) call_profile.knowledge_base_docs.push_back(doc);
  const std::string text = gateway.complete(
      call_profile, {{Role::kUser, "Write a system prompt for this task: " + intent}});
  if (text.empty()) throw FatalProviderError("prompt engineer returned an empty prompt");
  return registry.add_prompt_template(intent, text, strategy_docs);
}

}  // namespace saap
