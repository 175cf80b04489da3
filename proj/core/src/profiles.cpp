#include "saap/profiles.hpp"

#include <algorithm>

namespace saap {

namespace {

using json = nlohmann::json;

constexpr const char* kProfileKind = "profile";
constexpr const char* kTemplateKind = "prompt_template";

int revision_from_sequence(const std::string& allocated, const std::string& prefix) {
  return std::stoi(allocated.substr(prefix.size()));
}

}  // namespace

std::string AgentProfile::revision_id() const {
  return profile_id.str() + "@" + std::to_string(revision);
}

std::string PromptTemplate::revision_id() const {
  return template_id + "@" + std::to_string(revision);
}

void check_profile(const AgentProfile& p) {
  if (p.profile_id.empty()) throw PreconditionError("profile id is empty");
  if (p.profile_id.str().find('@') != std::string::npos) {
    throw PreconditionError("profile id may not contain '@'");
  }
  if (p.name.empty()) throw PreconditionError("profile name is empty");
  if (!(p.temperature >= 0.0 && p.temperature <= 2.0)) {
    throw PreconditionError("temperature must lie in [0,2]");
  }
}

json to_json(const AgentProfile& p) {
  json j = {{"profileId", p.profile_id},
            {"revision", p.revision},
            {"revisionId", p.revision_id()},
            {"name", p.name},
            {"systemPrompt", p.system_prompt},
            {"temperature", p.temperature},
            {"penaltySettings", p.penalty_settings},
            {"knowledgeBaseDocs", p.knowledge_base_docs}};
  j["parentRevision"] = p.parent_revision ? json(*p.parent_revision) : json(nullptr);
  j["outputSchemaRef"] = p.output_schema_ref ? json(*p.output_schema_ref) : json(nullptr);
  return j;
}

AgentProfile profile_from_json(const json& j) {
  try {
    AgentProfile p;
    p.profile_id = ProfileId(j.at("profileId").get<std::string>());
    p.revision = j.value("revision", 0);
    if (j.contains("parentRevision") && !j["parentRevision"].is_null()) {
      p.parent_revision = j["parentRevision"].get<int>();
    }
    p.name = j.at("name").get<std::string>();
    p.system_prompt = j.value("systemPrompt", std::string());
    p.temperature = j.value("temperature", 0.0);
    if (j.contains("penaltySettings")) {
      p.penalty_settings = j["penaltySettings"].get<std::map<std::string, double>>();
    }
    if (j.contains("knowledgeBaseDocs")) {
      p.knowledge_base_docs = j["knowledgeBaseDocs"].get<std::vector<DocId>>();
    }
    if (j.contains("outputSchemaRef") && !j["outputSchemaRef"].is_null()) {
      p.output_schema_ref = j["outputSchemaRef"].get<std::string>();
    }
    return p;
  } catch (const json::exception& e) {
    throw PreconditionError(std::string("malformed profile: ") + e.what());
  }
}

json to_json(const PromptTemplate& t) {
  return {{"templateId", t.template_id},     {"revision", t.revision},
          {"revisionId", t.revision_id()},   {"intent", t.intent},
          {"text", t.text},                  {"strategyDocs", t.strategy_docs},
          {"createdAt", format_timestamp(t.created_at)}};
}

AgentProfile ProfileRegistry::store_revision(AgentProfile profile, std::optional<int> parent) {
  check_profile(profile);
  for (const auto& doc : profile.knowledge_base_docs) {
    if (!store_.find_document(doc)) {
      throw NotFound("knowledge base document " + doc.str() + " not found");
    }
  }
  const std::string prefix = "profile:" + profile.profile_id.str() + "@";
  profile.revision = revision_from_sequence(store_.allocate_id(prefix), prefix);
  profile.parent_revision = parent;
  store_.put_artifact(kProfileKind, profile.revision_id(), to_json(profile));
  return profile;
}

AgentProfile ProfileRegistry::create(AgentProfile profile) {
  if (find(profile.profile_id)) {
    throw Rejected("profile " + profile.profile_id.str() + " already exists");
  }
  return store_revision(std::move(profile), std::nullopt);
}

AgentProfile ProfileRegistry::ensure(const AgentProfile& profile) {
  if (auto existing = find(profile.profile_id)) return *existing;
  return create(profile);
}

AgentProfile ProfileRegistry::add_revision(AgentProfile next) {
  const auto latest = get(next.profile_id);
  return store_revision(std::move(next), latest.revision);
}

std::vector<AgentProfile> ProfileRegistry::lineage(const ProfileId& id) const {
  std::vector<AgentProfile> out;
  const std::string prefix = id.str() + "@";
  for (const auto& [key, body] : store_.list_artifacts(kProfileKind)) {
    if (key.rfind(prefix, 0) == 0) out.push_back(profile_from_json(body));
  }
  std::sort(out.begin(), out.end(),
            [](const AgentProfile& a, const AgentProfile& b) { return a.revision < b.revision; });
  return out;
}

std::vector<AgentProfile> ProfileRegistry::list() const {
  std::map<ProfileId, AgentProfile> latest;
  for (const auto& [key, body] : store_.list_artifacts(kProfileKind)) {
    AgentProfile p = profile_from_json(body);
    auto it = latest.find(p.profile_id);
    if (it == latest.end() || it->second.revision < p.revision) latest[p.profile_id] = std::move(p);
  }
  std::vector<AgentProfile> out;
  for (auto& [id, p] : latest) out.push_back(std::move(p));
  return out;
}

std::optional<AgentProfile> ProfileRegistry::find(const ProfileId& id,
                                                  std::optional<int> revision) const {
  if (revision) {
    auto body = store_.get_artifact(kProfileKind, id.str() + "@" + std::to_string(*revision));
    if (!body) return std::nullopt;
    return profile_from_json(*body);
  }
  auto all = lineage(id);
  if (all.empty()) return std::nullopt;
  return all.back();
}

AgentProfile ProfileRegistry::get(const ProfileId& id, std::optional<int> revision) const {
  auto p = find(id, revision);
  if (!p) {
    throw NotFound("profile " + id.str() +
                   (revision ? "@" + std::to_string(*revision) : std::string()) + " not found");
  }
  return *p;
}

PromptTemplate ProfileRegistry::add_prompt_template(const std::string& intent,
                                                    const std::string& text,
                                                    const std::vector<DocId>& strategy_docs) {
  PromptTemplate t;
  t.template_id = "tmpl-" + sha256_hex(intent).substr(0, 12);
  const std::string prefix = "template:" + t.template_id + "@";
  t.revision = revision_from_sequence(store_.allocate_id(prefix), prefix);
  t.intent = intent;
  t.text = text;
  t.strategy_docs = strategy_docs;
  t.created_at = now_ms();
  store_.put_artifact(kTemplateKind, t.revision_id(), to_json(t));
  return t;
}

std::vector<PromptTemplate> ProfileRegistry::prompt_templates(const std::string& template_id) const {
  std::vector<PromptTemplate> out;
  const std::string prefix = template_id + "@";
  for (const auto& [key, body] : store_.list_artifacts(kTemplateKind)) {
    if (key.rfind(prefix, 0) != 0) continue;
    PromptTemplate t;
    t.template_id = body.at("templateId").get<std::string>();
    t.revision = body.at("revision").get<int>();
    t.intent = body.at("intent").get<std::string>();
    t.text = body.at("text").get<std::string>();
    t.strategy_docs = body.at("strategyDocs").get<std::vector<DocId>>();
    t.created_at = parse_timestamp(body.at("createdAt").get<std::string>()).value_or(Timestamp{});
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace saap
