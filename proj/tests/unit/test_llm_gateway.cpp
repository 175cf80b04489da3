#include <cstdlib>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "fixtures.hpp"
#include "stubs.hpp"
#include "saap/llm_gateway.hpp"

namespace saap {
namespace {

using json = nlohmann::json;

AgentProfile profile(const std::string& name = "SHIRLEY", double temperature = 0.2) {
  AgentProfile p;
  p.profile_id = ProfileId("p");
  p.revision = 1;
  p.name = name;
  p.system_prompt = "You analyze judgments.";
  p.temperature = temperature;
  return p;
}

std::vector<Message> ask(const std::string& text) { return {{Role::kUser, text}}; }

GatewayOptions fast() {
  GatewayOptions o;
  o.backoff_base = std::chrono::milliseconds(1);
  return o;
}

std::string valid_payload() { return testing::first_row_payload(); }

std::string invalid_payload() {
  json j = json::parse(testing::first_row_payload());
  j["typeLevelsPersuasive"] = 60;  // sum now exceeds 100
  return j.dump();
}

TEST(Stub, RuleMatchReturnsScriptedText) {
  StubScript script;
  script.rules.push_back({std::string("SHIRLEY"), std::nullopt, "OK"});
  Gateway gw(std::make_shared<StubProvider>(script), fast());
  EXPECT_EQ(gw.complete(profile(), ask("anything")), "OK");
}

TEST(Stub, DigestTakesPrecedenceAndIsDeterministic) {
  const auto messages = Gateway(std::make_shared<StubProvider>(StubScript{}), fast())
                            .assemble(profile(), ask("hello"));
  const std::string digest = prompt_digest(messages, 0.2);
  EXPECT_EQ(digest, prompt_digest(messages, 0.2));
  EXPECT_NE(digest, prompt_digest(messages, 0.3));

  StubScript script;
  script.by_digest[digest] = "by digest";
  script.rules.push_back({std::nullopt, std::nullopt, "by rule"});
  Gateway gw(std::make_shared<StubProvider>(script), fast());
  EXPECT_EQ(gw.complete(profile(), ask("hello")), "by digest");
  EXPECT_EQ(gw.complete(profile(), ask("hello")), "by digest");
  EXPECT_EQ(gw.complete(profile(), ask("other")), "by rule");
}

TEST(Stub, ContainsMatchesLastUserMessage) {
  StubScript script;
  script.rules.push_back({std::nullopt, std::string("claim"), "claimed"});
  script.rules.push_back({std::string("SARA"), std::nullopt, "sara"});
  Gateway gw(std::make_shared<StubProvider>(script), fast());
  EXPECT_EQ(gw.complete(profile(), ask("present your claim")), "claimed");
  EXPECT_EQ(gw.complete(profile("SARA"), ask("hello")), "sara");
}

TEST(Stub, MissCarriesDigest) {
  StubScript script;
  script.rules.push_back({std::string("SARA"), std::nullopt, "x"});
  Gateway gw(std::make_shared<StubProvider>(script), fast());
  const auto messages = gw.assemble(profile(), ask("unmatched"));
  try {
    gw.complete(profile(), ask("unmatched"));
    FAIL();
  } catch (const StubMiss& e) {
    EXPECT_EQ(e.digest(), prompt_digest(messages, 0.2));
    EXPECT_EQ(e.code(), ErrorCode::kStubMiss);
  }
}

TEST(Stub, ScriptJsonRoundTrip) {
  const StubScript script = testing::hearing_script();
  const StubScript back = StubScript::from_json(script.to_json());
  EXPECT_EQ(back.to_json(), script.to_json());
  EXPECT_THROW(StubScript::from_json(json::parse(R"({"rules":[{"contains":5,"response":"x"}]})")),
               ConfigurationError);
}

TEST(RepairLoop, InvalidThenValidTakesTwoAttempts) {
  auto provider = std::make_shared<testing::ScriptedProvider>(
      std::vector<std::string>{invalid_payload(), valid_payload()});
  Gateway gw(provider, fast());
  const auto result = gw.complete_structured(profile(), ask("analyze"), default_schema());
  EXPECT_EQ(result.attempt_count, 2);
  EXPECT_EQ(result.value, parse_record(valid_payload(), default_schema()));

  // The second request carries the rejected reply and feedback naming the problem.
  const auto second = provider->requests().at(1).messages;
  ASSERT_GE(second.size(), 3u);
  EXPECT_EQ(second[second.size() - 2].role, Role::kAssistant);
  EXPECT_EQ(second[second.size() - 2].content, invalid_payload());
  EXPECT_NE(second.back().content.find("speechActs"), std::string::npos);
  EXPECT_NE(second.back().content.find("Reply again"), std::string::npos);
}

TEST(RepairLoop, ValidFirstTakesOneAttempt) {
  auto provider = std::make_shared<testing::ScriptedProvider>(std::vector<std::string>{valid_payload()});
  Gateway gw(provider, fast());
  EXPECT_EQ(gw.complete_structured(profile(), ask("analyze"), default_schema()).attempt_count, 1);
}

TEST(RepairLoop, ExhaustionKeepsEveryAttempt) {
  auto provider = std::make_shared<testing::ScriptedProvider>(
      std::vector<std::string>{"not json", invalid_payload(), "{}"});
  Gateway gw(provider, fast());
  try {
    gw.complete_structured(profile(), ask("analyze"), default_schema());
    FAIL();
  } catch (const SchemaViolation& e) {
    ASSERT_EQ(e.attempts().size(), 3u);
    EXPECT_EQ(e.attempts()[0].raw_text, "not json");
    EXPECT_FALSE(e.attempts()[1].report.ok());
    EXPECT_FALSE(e.report().ok());
  }
  EXPECT_EQ(provider->calls(), 3u);
}

TEST(RepairLoop, CustomTemplateAndPolicyChecks) {
  RepairLoopPolicy policy;
  policy.max_attempts = 2;
  policy.feedback_template = "FIX: {report}";
  auto provider = std::make_shared<testing::ScriptedProvider>(
      std::vector<std::string>{invalid_payload(), valid_payload()});
  Gateway gw(provider, fast());
  gw.complete_structured(profile(), ask("analyze"), default_schema(), policy);
  EXPECT_EQ(provider->requests().at(1).messages.back().content.rfind("FIX: ", 0), 0u);
  policy.max_attempts = 0;
  EXPECT_THROW(check_policy(policy), PreconditionError);
}

TEST(Assembly, KnowledgeBaseComesBeforeSystemPrompt) {
  auto p = profile();
  p.knowledge_base_docs = {DocId("strategy-1")};
  Gateway gw(std::make_shared<StubProvider>(StubScript{}), fast(),
             [](const DocId& id) -> std::optional<std::string> {
               if (id.str() == "strategy-1") return std::string("Use chain of thought.");
               return std::nullopt;
             });
  const auto messages = gw.assemble(p, ask("go"));
  ASSERT_EQ(messages.size(), 2u);
  EXPECT_EQ(messages[0].role, Role::kSystem);
  const auto kb = messages[0].content.find("Use chain of thought.");
  const auto sys = messages[0].content.find("You analyze judgments.");
  ASSERT_NE(kb, std::string::npos);
  ASSERT_NE(sys, std::string::npos);
  EXPECT_LT(kb, sys);
  EXPECT_EQ(messages[1].content, "go");

  p.knowledge_base_docs = {DocId("missing")};
  EXPECT_THROW(gw.assemble(p, ask("go")), NotFound);
}

TEST(Assembly, KnowledgeBaseTruncatedToBudgetKeepingHead) {
  GatewayOptions o = fast();
  o.knowledge_base_token_budget = 10;  // 40 characters
  auto p = profile();
  p.knowledge_base_docs = {DocId("long")};
  const std::string body = std::string(40, 'a') + std::string(100, '#');
  Gateway gw(std::make_shared<StubProvider>(StubScript{}), o,
             [&](const DocId&) -> std::optional<std::string> { return body; });
  const auto system = gw.assemble(p, ask("go"))[0].content;
  EXPECT_NE(system.find(std::string(40, 'a')), std::string::npos);
  EXPECT_EQ(system.find('#'), std::string::npos);
}

TEST(Assembly, PenaltiesAndSeedReachTheProvider) {
  auto p = profile();
  p.penalty_settings = {{"frequency_penalty", 0.3}};
  auto provider = std::make_shared<testing::ScriptedProvider>(std::vector<std::string>{"x"});
  Gateway gw(provider, fast());
  gw.complete(p, ask("go"), {7, 0.9});
  const auto req = provider->requests().at(0);
  EXPECT_EQ(req.penalty_settings.at("frequency_penalty"), 0.3);
  EXPECT_EQ(req.seed, 7u);
  EXPECT_EQ(req.temperature, 0.9);
  EXPECT_EQ(req.profile_revision, "p@1");
}

TEST(Retries, RetryableFailuresAreRetried) {
  auto provider = std::make_shared<testing::FlakyProvider>(2, false, "done");
  Gateway gw(provider, fast());
  EXPECT_EQ(gw.complete(profile(), ask("go")), "done");
  EXPECT_EQ(provider->calls(), 3);
}

TEST(Retries, GiveUpAfterMaxRetries) {
  auto provider = std::make_shared<testing::FlakyProvider>(5, false, "done");
  Gateway gw(provider, fast());
  EXPECT_THROW(gw.complete(profile(), ask("go")), RetryableError);
  EXPECT_EQ(provider->calls(), 3);
}

TEST(Retries, FatalIsNotRetried) {
  auto provider = std::make_shared<testing::FlakyProvider>(1, true, "done");
  Gateway gw(provider, fast());
  EXPECT_THROW(gw.complete(profile(), ask("go")), FatalProviderError);
  EXPECT_EQ(provider->calls(), 1);
}

TEST(Audit, OneLinePerProviderCall) {
  std::ostringstream log;
  GatewayOptions o = fast();
  o.audit_log = &log;
  Gateway gw(std::make_shared<testing::FlakyProvider>(1, false, "done"), o);
  gw.complete(profile(), ask("go"), {3, std::nullopt});
  std::istringstream lines(log.str());
  std::vector<json> entries;
  for (std::string line; std::getline(lines, line);) entries.push_back(json::parse(line));
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0]["outcome"], "provider_unavailable");
  EXPECT_EQ(entries[1]["outcome"], "ok");
  EXPECT_EQ(entries[1]["attempt"], 2);
  EXPECT_EQ(entries[1]["profile"], "p@1");
  EXPECT_EQ(entries[1]["seed"], 3);
  EXPECT_EQ(entries[0]["digest"], entries[1]["digest"]);
  EXPECT_TRUE(entries[1].contains("latencyMs"));
}

TEST(Concurrency, InFlightCapIsRespected) {
  std::atomic<int> current{0}, peak{0};
  auto provider = std::make_shared<ResponderProvider>([&](const CompletionRequest&) {
    const int now = ++current;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --current;
    return std::string("ok");
  });
  GatewayOptions o = fast();
  o.max_in_flight = 2;
  Gateway gw(provider, o);
  {
    std::vector<std::jthread> pool;
    for (int i = 0; i < 8; ++i) pool.emplace_back([&] { gw.complete(profile(), ask("go")); });
  }
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}

TEST(Binding, IncompleteBindingsAreConfigurationErrors) {
  ProviderBinding stub;
  EXPECT_THROW(check_binding(stub), ConfigurationError);
  ProviderBinding hosted;
  hosted.kind = ProviderBinding::Kind::kHosted;
  EXPECT_THROW(check_binding(hosted), ConfigurationError);
  hosted.endpoint = "ftp://example";
  hosted.credentials_ref = "KEY";
  EXPECT_THROW(check_binding(hosted), ConfigurationError);
  hosted.endpoint = "https://example.test/v1";
  EXPECT_NO_THROW(check_binding(hosted));
  EXPECT_EQ(make_provider(hosted)->name(), "hosted");
}

TEST(Refine, StoresTemplateRevisions) {
  CorpusStore store;
  ProfileRegistry reg(store);
  const DocId strategy = store.ingest_document(testing::make_document("other", "en", 1, "Prompting guide"));
  auto provider = std::make_shared<testing::ScriptedProvider>(
      std::vector<std::string>{"Engineered prompt A", "Engineered prompt B"});
  Gateway gw(provider, fast(), [&](const DocId& id) -> std::optional<std::string> {
    auto d = store.find_document(id);
    return d ? std::optional(d->body) : std::nullopt;
  });
  auto engineer = profile("PROMPT_ENGINEER", 0.7);
  const auto t1 = refine_prompt(gw, reg, engineer, "Score bias in judgments", {strategy});
  EXPECT_EQ(t1.text, "Engineered prompt A");
  EXPECT_EQ(t1.strategy_docs, std::vector<DocId>{strategy});
  EXPECT_NE(provider->requests()[0].messages[0].content.find("Prompting guide"), std::string::npos);
  const auto t2 = refine_prompt(gw, reg, engineer, "Score bias in judgments", {});
  EXPECT_EQ(t2.revision, t1.revision + 1);
  EXPECT_THROW(refine_prompt(gw, reg, engineer, "", {}), PreconditionError);
}

TEST(Refine, SameIntentTwiceGivesDistinctRevisions) {
  CorpusStore store;
  ProfileRegistry reg(store);
  StubScript script;
  script.rules.push_back({std::string("PROMPT_ENGINEER"), std::nullopt, "You rate judgments."});
  Gateway gw(std::make_shared<StubProvider>(script), fast());
  const auto engineer = profile("PROMPT_ENGINEER", 0.0);
  const auto a = refine_prompt(gw, reg, engineer, "rate judgments for bias and undertones", {});
  const auto b = refine_prompt(gw, reg, engineer, "rate judgments for bias and undertones", {});
  EXPECT_EQ(a.text, "You rate judgments.");
  EXPECT_EQ(a.text, b.text);
  EXPECT_NE(a.revision_id(), b.revision_id());
  EXPECT_EQ(b.revision, a.revision + 1);
}

// Hosted provider against a local server speaking the chat-completions format.
class HostedProviderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = json::parse(req.body);
      last_auth_ = req.get_header_value("Authorization");
      res.status = status_;
      res.set_content(json{{"choices", {{{"message", {{"content", "hello"}}}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    ::setenv("SAAP_TEST_KEY", "secret", 1);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  HostedProvider provider() {
    ProviderBinding b;
    b.kind = ProviderBinding::Kind::kHosted;
    b.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    b.credentials_ref = "SAAP_TEST_KEY";
    b.model = "test-model";
    b.timeout_seconds = 5;
    return HostedProvider(b);
  }
  CompletionRequest request() {
    CompletionRequest r;
    r.messages = {{Role::kSystem, "sys"}, {Role::kUser, "hi"}};
    r.temperature = 0.2;
    r.penalty_settings = {{"presence_penalty", 0.1}};
    return r;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int status_ = 200;
  json last_body_;
  std::string last_auth_;
};

TEST_F(HostedProviderTest, SendsChatRequestAndReadsContent) {
  EXPECT_EQ(provider().complete(request()), "hello");
  EXPECT_EQ(last_auth_, "Bearer secret");
  EXPECT_EQ(last_body_["model"], "test-model");
  EXPECT_EQ(last_body_["messages"][0]["role"], "system");
  EXPECT_EQ(last_body_["messages"][1]["content"], "hi");
  EXPECT_EQ(last_body_["presence_penalty"], 0.1);
}

TEST_F(HostedProviderTest, StatusMapping) {
  status_ = 401;
  EXPECT_THROW(provider().complete(request()), FatalProviderError);
  status_ = 503;
  EXPECT_THROW(provider().complete(request()), RetryableError);
  status_ = 429;
  EXPECT_THROW(provider().complete(request()), RetryableError);
  status_ = 400;
  EXPECT_THROW(provider().complete(request()), FatalProviderError);
}

TEST_F(HostedProviderTest, MissingCredentialIsFatal) {
  ::unsetenv("SAAP_TEST_KEY");
  EXPECT_THROW(provider().complete(request()), FatalProviderError);
}

TEST(HostedProviderOffline, UnreachableEndpointIsRetryable) {
  ::setenv("SAAP_TEST_KEY", "secret", 1);
  httplib::Server probe;
  const int port = probe.bind_to_any_port("127.0.0.1");  // bound but never listening
  probe.stop();
  ProviderBinding b;
  b.kind = ProviderBinding::Kind::kHosted;
  b.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  b.credentials_ref = "SAAP_TEST_KEY";
  b.timeout_seconds = 1;
  CompletionRequest r;
  r.messages = {{Role::kUser, "hi"}};
  EXPECT_THROW(HostedProvider(b).complete(r), RetryableError);
}

}  // namespace
}  // namespace saap
