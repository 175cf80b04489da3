#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saap/corpus_store.hpp"
#include "saap/ids.hpp"
#include "saap/util.hpp"

namespace saap {

// A named prompt configuration. Profiles are immutable once stored; edits
// produce a new revision whose parent is the revision it was derived from.
struct AgentProfile {
  ProfileId profile_id;
  int revision = 0;  // assigned by the registry, starting at 1
  std::optional<int> parent_revision;
  std::string name;  // SHIRLEY, SAM, SARA, CRITIC, ...
  std::string system_prompt;
  double temperature = 0;
  // Passed to the provider verbatim (e.g. presence_penalty).
  std::map<std::string, double> penalty_settings;
  std::vector<DocId> knowledge_base_docs;
  std::optional<std::string> output_schema_ref;

  std::string revision_id() const;
  friend bool operator==(const AgentProfile&, const AgentProfile&) = default;
};

// Throws PreconditionError on an empty name or out-of-range temperature.
void check_profile(const AgentProfile& profile);

nlohmann::json to_json(const AgentProfile& profile);
AgentProfile profile_from_json(const nlohmann::json& j);

// Engineered system prompt produced by the prompt-refinement step.
struct PromptTemplate {
  std::string template_id;
  int revision = 0;
  std::string intent;
  std::string text;
  std::vector<DocId> strategy_docs;
  Timestamp created_at{};

  std::string revision_id() const;
};

nlohmann::json to_json(const PromptTemplate& t);

class ProfileRegistry {
 public:
  explicit ProfileRegistry(CorpusStore& store) : store_(store) {}

  // Stores revision 1. Rejected if the profile id already exists.
  AgentProfile create(AgentProfile profile);
  // Creates the profile unless it already exists; returns the latest revision.
  AgentProfile ensure(const AgentProfile& profile);
  // Stores `next` as a new revision of its profile id, parented on the latest.
  AgentProfile add_revision(AgentProfile next);

  std::optional<AgentProfile> find(const ProfileId& id,
                                   std::optional<int> revision = std::nullopt) const;
  AgentProfile get(const ProfileId& id, std::optional<int> revision = std::nullopt) const;
  // Every revision, oldest first.
  std::vector<AgentProfile> lineage(const ProfileId& id) const;
  // Latest revision of every profile, ordered by profile id.
  std::vector<AgentProfile> list() const;

  PromptTemplate add_prompt_template(const std::string& intent, const std::string& text,
                                     const std::vector<DocId>& strategy_docs);
  std::vector<PromptTemplate> prompt_templates(const std::string& template_id) const;

 private:
  AgentProfile store_revision(AgentProfile profile, std::optional<int> parent);

  CorpusStore& store_;
};

}  // namespace saap
