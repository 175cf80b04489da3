#include "saap/pipeline.hpp"

namespace saap {

namespace {

// Stands in for a provider binding that is incomplete, so commands that never
// call a model still work; the configuration error surfaces on first use.
class UnconfiguredProvider : public Provider {
 public:
  explicit UnconfiguredProvider(std::string reason) : reason_(std::move(reason)) {}
  std::string complete(const CompletionRequest&) override { throw ConfigurationError(reason_); }
  std::string name() const override { return "unconfigured"; }

 private:
  std::string reason_;
};

std::shared_ptr<Provider> provider_for(const PipelineConfig& config) {
  if (config.provider) return config.provider;
  try {
    return make_provider(config.binding);
  } catch (const ConfigurationError& e) {
    return std::make_shared<UnconfiguredProvider>(e.what());
  }
}

AgentProfile make_profile(const std::string& id, const std::string& name, double temperature,
                          std::string prompt) {
  AgentProfile p;
  p.profile_id = ProfileId(id);
  p.name = name;
  p.temperature = temperature;
  p.system_prompt = std::move(prompt);
  return p;
}

}  // namespace

std::vector<AgentProfile> default_profiles(const std::string& schema_version) {
  auto shirley = make_profile(
      "shirley-v1", "SHIRLEY", 0.2,
      "You read court judgments and score how they are written. For each judgment, rate bias, "
      "credibility, clarity, inferential depth, humor, sarcasm and undertones on the scales "
      "given, split its sentences into persuasive, declarative, inquisitive and exclamatory "
      "shares, note each writer's own bias, and give the rationales and inferences behind your "
      "scores. Judge the reasoning, not the outcome.");
  shirley.output_schema_ref = schema_version;
  return {
      shirley,
      make_profile("sam-v1", "SAM", 0.2,
                   "You study batches of judgment analysis records. You will be given one "
                   "candidate finding at a time with the records behind it. Describe the finding "
                   "in one short paragraph that stays within what the records show."),
      make_profile("sara-v1", "SARA", 0.2,
                   "You arbitrate disputes about findings on court judgments. SHIRLEY argues for "
                   "the finding and CRITIC argues against it. You may ask each party up to two "
                   "questions. Then decide whether the claim is upheld, rejected or partially "
                   "upheld, giving a judgment that cites the arbitration rules you rely on by "
                   "number."),
      make_profile("verdict-classifier-v1", "CLASSIFIER", 0.0,
                   "You label arbitration decisions. Report only what the decision text says."),
      make_profile("prompt-engineer-v1", "PROMPT_ENGINEER", 0.7,
                   "You write system prompts for language-model analysts. Given a task and any "
                   "reference material on prompting strategy, reply with one complete system "
                   "prompt and nothing else."),
  };
}

std::string default_critic_instruction() {
  return "Your job in this arbitration is to oppose SHIRLEY. Build the strongest case you can "
         "that the finding below is wrong or overstated, working from the judgment and the "
         "supporting records. Answer questions from SARA directly.";
}

AgentProfile resolve_profile(const ProfileRegistry& registry, const std::string& ref) {
  const auto at = ref.rfind('@');
  if (at == std::string::npos) return registry.get(ProfileId(ref));
  const auto rev = parse_number(ref.substr(at + 1));
  if (!rev || *rev < 1 || *rev != static_cast<int>(*rev)) {
    throw PreconditionError("bad profile revision in " + ref);
  }
  return registry.get(ProfileId(ref.substr(0, at)), static_cast<int>(*rev));
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  if (config_.workers < 1) throw ConfigurationError("workers must be at least 1");
  if (!config_.audit_log_path.empty()) {
    audit_file_ = std::make_unique<std::ofstream>(config_.audit_log_path, std::ios::app);
    if (!*audit_file_) throw ConfigurationError("cannot open audit log " + config_.audit_log_path);
    config_.gateway.audit_log = audit_file_.get();
  }

  StoreOptions store_options;
  store_options.path = config_.store_path;
  store_ = std::make_unique<CorpusStore>(store_options);
  registry_ = std::make_unique<ProfileRegistry>(*store_);

  if (auto builtin = builtin_schema(config_.schema_version)) {
    schema_ = *builtin;
  } else if (auto stored = store_->find_schema(config_.schema_version)) {
    schema_ = *stored;
  } else {
    throw ConfigurationError("unknown schema version " + config_.schema_version);
  }

  for (const auto& p : default_profiles(schema_.version)) registry_->ensure(p);

  auto provider = provider_for(config_);
  CorpusStore* store = store_.get();
  gateway_ = std::make_unique<Gateway>(
      std::move(provider), config_.gateway,
      [store](const DocId& id) -> std::optional<std::string> {
        auto doc = store->find_document(id);
        if (!doc) return std::nullopt;
        return doc->body;
      });
  analyzer_ = std::make_unique<Analyzer>(*store_, *gateway_, schema_, config_.analyzer);
  aggregator_ = std::make_unique<Aggregator>(*store_, *gateway_);
  ArbitrationProfiles roles;
  roles.critic_instruction = default_critic_instruction();
  arbitration_ = std::make_unique<ArbitrationEngine>(*store_, *gateway_, *registry_, roles,
                                                     config_.analyzer.policy);
}

}  // namespace saap
