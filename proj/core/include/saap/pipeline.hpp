#pragma once

// Wires store, profiles, gateway, analyzer, aggregator and arbitration engine
// together the way the CLI and the HTTP service use them.

#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "saap/aggregator.hpp"
#include "saap/analyzer.hpp"
#include "saap/arbitration.hpp"
#include "saap/corpus_store.hpp"
#include "saap/llm_gateway.hpp"
#include "saap/profiles.hpp"

namespace saap {

inline constexpr std::string_view kDefaultSchemaVersion = "saap-figure4-v1";

struct PipelineConfig {
  std::string store_path = ":memory:";
  ProviderBinding binding;
  std::shared_ptr<Provider> provider;  // used instead of `binding` when set
  std::string schema_version = std::string(kDefaultSchemaVersion);
  int workers = 1;
  GatewayOptions gateway;
  AnalyzerOptions analyzer;
  std::string audit_log_path;  // empty = no audit log file
};

// Profiles seeded into every store: shirley-v1, sam-v1, sara-v1,
// verdict-classifier-v1 and prompt-engineer-v1.
std::vector<AgentProfile> default_profiles(const std::string& schema_version);
std::string default_critic_instruction();

// Resolves "id" (latest revision) or "id@revision".
AgentProfile resolve_profile(const ProfileRegistry& registry, const std::string& ref);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const PipelineConfig& config() const { return config_; }
  const SchemaConfig& schema() const { return schema_; }
  CorpusStore& store() { return *store_; }
  ProfileRegistry& registry() { return *registry_; }
  Gateway& gateway() { return *gateway_; }
  Analyzer& analyzer() { return *analyzer_; }
  Aggregator& aggregator() { return *aggregator_; }
  ArbitrationEngine& arbitration() { return *arbitration_; }

  AgentProfile profile(const std::string& ref) const { return resolve_profile(*registry_, ref); }

 private:
  PipelineConfig config_;
  std::unique_ptr<std::ofstream> audit_file_;
  std::unique_ptr<CorpusStore> store_;
  std::unique_ptr<ProfileRegistry> registry_;
  SchemaConfig schema_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<Analyzer> analyzer_;
  std::unique_ptr<Aggregator> aggregator_;
  std::unique_ptr<ArbitrationEngine> arbitration_;
};

}  // namespace saap
