#include "saap/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "saap/api_service.hpp"
#include "saap/util.hpp"

namespace saap::cli {

namespace {

using json = nlohmann::json;

constexpr int kErrorCodeBase = 10;
constexpr int kErrorCodeCount = static_cast<int>(ErrorCode::kVerdictParseFailure) + 1;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An error body returned by an API route.
struct RouteFailure {
  ApiResponse response;
};

std::string error_line(std::string_view code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out.flush()) throw IoError("cannot write " + path);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string env_name(const std::string& key) {
  std::string name = "SAAP_";
  for (char c : key) name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

// Flags > environment > settings file > built-in default.
class Settings {
 public:
  explicit Settings(const EnvLookup& env) : env_(env) {}

  void bind(CLI::App& app, const std::string& key, const std::string& help) {
    options_[key] = app.add_option("--" + key, flags_[key], help + " [env " + env_name(key) + "]");
  }

  void load_file(const std::string& path) { file_ = parse_config_file(read_file(path)); }

  std::optional<std::string> get(const std::string& key) const {
    if (auto it = options_.find(key); it != options_.end() && it->second->count() > 0) {
      return flags_.at(key);
    }
    if (auto v = env_(env_name(key))) return v;
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    return std::nullopt;
  }

 private:
  const EnvLookup& env_;
  std::map<std::string, std::string> flags_;
  std::map<std::string, CLI::Option*> options_;
  std::map<std::string, std::string> file_;
};

const char* const kSettingKeys[] = {"store",  "provider", "stub-script", "endpoint",  "credentials-env",
                                    "model",  "timeout",  "schema",      "workers",   "audit-log",
                                    "listen", "ui-dir"};

CliConfig resolve(const Settings& s) {
  CliConfig c;
  if (auto v = s.get("store")) c.store_path = *v;
  if (auto v = s.get("schema")) c.schema_version = *v;
  if (auto v = s.get("listen")) c.listen_address = *v;
  if (auto v = s.get("audit-log")) c.audit_log = *v;
  if (auto v = s.get("ui-dir")) c.ui_dir = *v;
  if (auto v = s.get("workers")) {
    const auto n = parse_number(*v);
    if (!n || *n < 1 || *n != static_cast<int>(*n)) throw ConfigurationError("workers must be an integer >= 1");
    c.workers = static_cast<int>(*n);
  }
  const std::string provider = s.get("provider").value_or("stub");
  if (provider == "hosted") {
    c.binding.kind = ProviderBinding::Kind::kHosted;
  } else if (provider != "stub") {
    throw ConfigurationError("provider must be stub or hosted, not " + provider);
  }
  if (auto v = s.get("endpoint")) c.binding.endpoint = *v;
  if (auto v = s.get("credentials-env")) c.binding.credentials_ref = *v;
  if (auto v = s.get("model")) c.binding.model = *v;
  if (auto v = s.get("timeout")) {
    const auto n = parse_number(*v);
    if (!n || *n < 1) throw ConfigurationError("timeout must be a positive number of seconds");
    c.binding.timeout_seconds = static_cast<int>(*n);
  }
  if (auto v = s.get("stub-script")) {
    std::string text;
    try {
      text = read_file(*v);
    } catch (const IoError& e) {
      throw ConfigurationError(e.what());
    }
    try {
      c.binding.stub_script = StubScript::from_json(json::parse(text));
    } catch (const json::exception& e) {
      throw ConfigurationError("stub script " + *v + " is not valid: " + e.what());
    }
  }
  return c;
}

// Issues one route call; non-2xx responses become RouteFailure.
ApiResponse call(ApiService& api, const std::string& method, const std::string& path,
                 const json& body = nullptr, std::map<std::string, std::string> query = {}) {
  ApiRequest req{method, path, std::move(query), body.is_null() ? std::string() : body.dump()};
  ApiResponse res = api.handle(req);
  if (res.status >= 400) throw RouteFailure{res};
  return res;
}

json call_json(ApiService& api, const std::string& method, const std::string& path,
               const json& body = nullptr, std::map<std::string, std::string> query = {}) {
  return call(api, method, path, body, std::move(query)).json();
}

void print(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

template <typename T>
void put_if(json& body, const char* key, const std::optional<T>& v) {
  if (v) body[key] = *v;
}

// Latest case for a finding, if any.
std::optional<json> latest_case(ApiService& api, const std::string& finding) {
  std::optional<json> found;
  std::size_t offset = 0;
  for (;;) {
    json page = call_json(api, "GET", "/arbitrations", nullptr,
                          {{"limit", std::to_string(kMaxPageSize)}, {"offset", std::to_string(offset)}});
    for (const auto& c : page["items"]) {
      if (c["finding"]["findingId"] == finding) found = c;
    }
    offset += page["items"].size();
    if (page["items"].empty() || offset >= page["total"].get<std::size_t>()) break;
  }
  return found;
}

json turn_summary(const json& c) {
  return {{"caseId", c["caseId"]},
          {"phase", c["phase"]},
          {"turn", c["transcript"].empty() ? json(nullptr) : c["transcript"].back()},
          {"verdict", c["verdict"]}};
}

}  // namespace

int exit_code_for(ErrorCode code) { return kErrorCodeBase + static_cast<int>(code); }

int exit_code_for(std::string_view code) {
  for (int i = 0; i < kErrorCodeCount; ++i) {
    if (to_string(static_cast<ErrorCode>(i)) == code) return kErrorCodeBase + i;
  }
  if (code == "bad_request") return kExitBadRequest;
  return kExitInternal;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

std::map<std::string, std::string> parse_config_file(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigurationError("settings line " + std::to_string(n) + " is not key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (std::find(std::begin(kSettingKeys), std::end(kSettingKeys), key) == std::end(kSettingKeys)) {
      throw ConfigurationError("unknown setting '" + key + "' on line " + std::to_string(n));
    }
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env) {
  CLI::App app{"Judgment analysis, aggregation and arbitration pipeline", "saap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "saap 0.1.0");

  Settings settings(env);
  std::string config_path;
  auto* config_opt = app.add_option("--config", config_path, "settings file (key = value) [env SAAP_CONFIG]");
  settings.bind(app, "store", "SQLite store path");
  settings.bind(app, "provider", "model provider: stub or hosted");
  settings.bind(app, "stub-script", "stub provider script (JSON)");
  settings.bind(app, "endpoint", "hosted provider base URL");
  settings.bind(app, "credentials-env", "environment variable holding the provider key");
  settings.bind(app, "model", "hosted model name");
  settings.bind(app, "timeout", "provider timeout in seconds");
  settings.bind(app, "schema", "record schema version");
  settings.bind(app, "workers", "concurrent analyses");
  settings.bind(app, "audit-log", "append model calls to this JSONL file");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "no progress events on stderr");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "add judgment documents to the corpus");
  std::vector<std::string> paths;
  std::optional<std::string> jurisdiction, language, court, decision_date;
  ingest->add_option("paths", paths, "text files, or .json documents")->required();
  ingest->add_option("--jurisdiction", jurisdiction);
  ingest->add_option("--language", language);
  ingest->add_option("--court", court);
  ingest->add_option("--date", decision_date, "decision date YYYY-MM-DD");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "analyze documents into a new run");
  std::optional<std::string> profile;
  std::optional<double> temperature;
  std::vector<std::string> doc_ids;
  std::optional<int> run_workers;
  analyze->add_option("--profile", profile);
  analyze->add_option("--temperature", temperature);
  analyze->add_option("--jurisdiction", jurisdiction);
  analyze->add_option("--language", language);
  analyze->add_option("--doc", doc_ids, "restrict to these document ids");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "run the calibration harness");
  std::string spec_path;
  calibrate->add_option("--spec", spec_path, "calibration spec (JSON)")->required();
  calibrate->add_option("--profile", profile);
  calibrate->add_option("--temperature", temperature);

  // repeat
  auto* repeat = app.add_subcommand("repeat", "run the repeatability harness on one document");
  std::string doc;
  int n = 0;
  repeat->add_option("--doc", doc)->required();
  repeat->add_option("--n", n)->required();
  repeat->add_option("--temperature", temperature);
  repeat->add_option("--profile", profile);

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "compose findings, or print statistics with --stats");
  std::optional<std::string> field, run, stats, group_by;
  std::optional<double> threshold;
  std::optional<int> top_k;
  aggregate->add_option("--field", field);
  aggregate->add_option("--topK", top_k);
  aggregate->add_option("--run", run);
  aggregate->add_option("--threshold", threshold);
  aggregate->add_option("--profile", profile);
  aggregate->add_option("--stats", stats)->check(CLI::IsMember({"deviations", "cohorts", "cross-border"}));
  aggregate->add_option("--group-by", group_by);

  // arbitrate
  auto* arbitrate = app.add_subcommand("arbitrate", "open, step or complete an arbitration");
  std::string finding;
  bool step = false, complete = false, fresh = false;
  std::optional<int> max_turns;
  arbitrate->add_option("--finding", finding)->required();
  auto* step_flag = arbitrate->add_flag("--step", step, "advance the current case by one turn");
  auto* complete_flag = arbitrate->add_flag("--complete", complete, "run the current case to its verdict");
  step_flag->excludes(complete_flag);
  arbitrate->add_flag("--new", fresh, "open a new case even if one exists");
  arbitrate->add_option("--max-turns", max_turns);

  // export
  auto* export_cmd = app.add_subcommand("export", "write a run as CSV");
  std::optional<std::string> out_path;
  std::string export_run;
  export_cmd->add_option("--run", export_run)->required();
  export_cmd->add_option("--out", out_path, "file to write; stdout when absent");

  // serve
  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  settings.bind(*serve, "listen", "bind address host:port");
  settings.bind(*serve, "ui-dir", "static files served under /ui");

  // profile
  auto* profile_cmd = app.add_subcommand("profile", "list, show or revise agent profiles");
  std::optional<std::string> profile_id, system_prompt, focus;
  std::optional<int> revision;
  profile_cmd->add_option("id", profile_id, "profile id; all profiles when absent");
  profile_cmd->add_option("--revision", revision);
  profile_cmd->add_option("--system-prompt", system_prompt, "revise with this system prompt");
  profile_cmd->add_option("--temperature", temperature, "revise with this temperature");
  profile_cmd->add_option("--append-focus", focus, "revise by appending a focus question");

  // refine
  auto* refine = app.add_subcommand("refine", "ask the prompt engineer for a system prompt");
  std::string intent;
  std::vector<std::string> strategy_docs;
  refine->add_option("--intent", intent)->required();
  refine->add_option("--strategy-doc", strategy_docs);
  refine->add_option("--profile", profile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "saap 0.1.0\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (config_opt->count() == 0) {
      if (auto v = env("SAAP_CONFIG")) config_path = *v;
    }
    if (!config_path.empty()) settings.load_file(config_path);
    const CliConfig config = resolve(settings);

    PipelineConfig pc;
    pc.store_path = config.store_path;
    pc.binding = config.binding;
    pc.schema_version = config.schema_version;
    pc.workers = config.workers;
    pc.audit_log_path = config.audit_log;
    if (!quiet) pc.analyzer.progress = &err;
    Pipeline pipeline(pc);
    ApiService api(pipeline);

    if (*ingest) {
      for (const auto& path : paths) {
        const std::string text = read_file(path);
        json body;
        if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
          try {
            body = json::parse(text);
          } catch (const json::parse_error& e) {
            throw ParseFailure(path + ": " + e.what(), e.byte);
          }
          if (!body.is_object()) throw Rejected(path + " does not hold a JSON document object");
        } else {
          body = {{"body", text}};
        }
        put_if(body, "jurisdiction", jurisdiction);
        put_if(body, "language", language);
        put_if(body, "court", court);
        put_if(body, "decisionDate", decision_date);
        if (!body.contains("sourceRef")) body["sourceRef"] = path;
        json doc = call_json(api, "POST", "/documents", body);
        doc.erase("body");
        out << doc.dump() << '\n';
      }
    } else if (*analyze) {
      json body = {{"workers", config.workers}};
      put_if(body, "profile", profile);
      put_if(body, "temperature", temperature);
      put_if(body, "jurisdiction", jurisdiction);
      put_if(body, "language", language);
      if (!doc_ids.empty()) body["docIds"] = doc_ids;
      print(out, call_json(api, "POST", "/runs", body));
    } else if (*calibrate) {
      json body;
      try {
        body = json::parse(read_file(spec_path));
      } catch (const json::parse_error& e) {
        throw ParseFailure(spec_path + ": " + e.what(), e.byte);
      }
      if (!body.is_object()) throw PreconditionError("calibration spec must be a JSON object");
      put_if(body, "profile", profile);
      put_if(body, "temperature", temperature);
      print(out, call_json(api, "POST", "/calibrations", body));
    } else if (*repeat) {
      json body = {{"docId", doc}, {"n", n}};
      put_if(body, "profile", profile);
      put_if(body, "temperature", temperature);
      print(out, call_json(api, "POST", "/repeatability", body));
    } else if (*aggregate) {
      if (stats) {
        std::map<std::string, std::string> q;
        if (run) q["runId"] = *run;
        if (field) q["field"] = *field;
        if (group_by) q["groupBy"] = *group_by;
        if (threshold) q["threshold"] = format_number(*threshold);
        print(out, call_json(api, "GET", "/aggregate/" + *stats, nullptr, q));
      } else {
        if (!top_k) throw UsageError("aggregate needs --topK unless --stats is given");
        json body = {{"topK", *top_k}};
        put_if(body, "profile", profile);
        put_if(body, "runId", run);
        put_if(body, "field", field);
        put_if(body, "threshold", threshold);
        print(out, call_json(api, "POST", "/aggregate/findings", body));
      }
    } else if (*arbitrate) {
      std::optional<json> current = fresh ? std::nullopt : latest_case(api, finding);
      const bool opened = !current;
      if (opened) current = call_json(api, "POST", "/arbitrations", {{"findingId", finding}});
      const std::string id = (*current)["caseId"];
      if (complete) {
        json body = json::object();
        put_if(body, "maxTurns", max_turns);
        print(out, call_json(api, "POST", "/arbitrations/" + id + "/complete", body));
      } else if (step && !opened) {
        print(out, turn_summary(call_json(api, "POST", "/arbitrations/" + id + "/advance")));
      } else {
        print(out, turn_summary(*current));
      }
    } else if (*export_cmd) {
      const std::string csv = call(api, "GET", "/export/csv", nullptr, {{"runId", export_run}}).body;
      if (out_path) {
        write_file(*out_path, csv);
      } else {
        out << csv;
      }
    } else if (*serve) {
      ServerOptions options = parse_listen(config.listen_address);
      options.ui_dir = config.ui_dir;
      HttpServer server(api, options);
      err << json{{"event", "listening"}, {"host", options.host}, {"port", options.port}}.dump() << '\n';
      server.run();
    } else if (*profile_cmd) {
      const bool revise = system_prompt || temperature || focus;
      if (!profile_id) {
        if (revise) throw UsageError("revising needs a profile id");
        print(out, call_json(api, "GET", "/profiles", nullptr, {{"limit", std::to_string(kMaxPageSize)}}));
      } else if (revise) {
        json body = json::object();
        put_if(body, "systemPrompt", system_prompt);
        put_if(body, "temperature", temperature);
        put_if(body, "appendFocus", focus);
        print(out, call_json(api, "POST", "/profiles/" + *profile_id + "/revisions", body));
      } else {
        std::map<std::string, std::string> q;
        if (revision) q["revision"] = std::to_string(*revision);
        print(out, call_json(api, "GET", "/profiles/" + *profile_id, nullptr, q));
      }
    } else if (*refine) {
      json body = {{"intent", intent}, {"strategyDocs", strategy_docs}};
      put_if(body, "profile", profile);
      print(out, call_json(api, "POST", "/prompts/refine", body));
    }
    return kExitOk;
  } catch (const RouteFailure& f) {
    err << f.response.body << '\n';
    std::string code = "internal_error";
    try {
      code = f.response.json()["error"]["code"];
    } catch (const std::exception&) {
    }
    return exit_code_for(code);
  } catch (const Error& e) {
    const auto code = to_string(e.code());
    err << error_line(code, e.what()) << '\n';
    return exit_code_for(e.code());
  } catch (const UsageError& e) {
    err << error_line("usage", e.what()) << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << error_line("io_error", e.what()) << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << error_line("internal_error", e.what()) << '\n';
    return kExitInternal;
  }
}

}  // namespace saap::cli
