#include "saap/api_service.hpp"

#include <algorithm>
#include <functional>
#include <regex>

#include <httplib.h>

namespace saap {

namespace {

using json = nlohmann::json;

// Malformed request (bad JSON body, missing or mistyped parameter).
class BadRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Registry {
  std::string_view code;
  int status;
};

constexpr Registry kRegistry[] = {
    {"bad_request", 400},
    {"configuration_error", 400},
    {"parse_failure", 400},
    {"precondition_failed", 400},
    {"unknown_key", 400},
    {"not_found", 404},
    {"route_not_found", 404},
    {"method_not_allowed", 405},
    {"integrity_violation", 409},
    {"invalid_phase", 409},
    {"budget_exhausted", 409},
    {"turn_limit_exceeded", 409},
    {"schema_violation", 422},
    {"rejected", 422},
    {"context_overflow", 422},
    {"empty_corpus", 422},
    {"insufficient_data", 422},
    {"type_error", 422},
    {"insufficient_groups", 422},
    {"provider_fatal", 502},
    {"stub_miss", 502},
    {"verdict_parse_failure", 502},
    {"provider_unavailable", 503},
    {"internal_error", 500},
};

ApiResponse ok(const json& body, int status = 200) {
  return {status, "application/json", body.dump()};
}

json parse_body(const ApiRequest& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw BadRequest("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw BadRequest(std::string("request body is not JSON: ") + e.what());
  }
}

template <typename T>
T arg(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) {
    throw BadRequest(std::string("missing field ") + key);
  }
  try {
    return body[key].get<T>();
  } catch (const json::exception&) {
    throw BadRequest(std::string("field ") + key + " has the wrong type");
  }
}

template <typename T>
std::optional<T> opt_arg(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  return arg<T>(body, key);
}

std::optional<std::string> query(const ApiRequest& req, const std::string& key) {
  auto it = req.query.find(key);
  if (it == req.query.end()) return std::nullopt;
  return it->second;
}

std::optional<double> query_number(const ApiRequest& req, const std::string& key) {
  auto v = query(req, key);
  if (!v) return std::nullopt;
  auto n = parse_number(*v);
  if (!n) throw BadRequest("query parameter " + key + " is not a number");
  return n;
}

std::size_t query_count(const ApiRequest& req, const std::string& key, std::size_t fallback) {
  auto n = query_number(req, key);
  if (!n) return fallback;
  if (*n < 0 || *n != std::floor(*n)) throw BadRequest(key + " must be a non-negative integer");
  return static_cast<std::size_t>(*n);
}

struct Page {
  std::size_t limit;
  std::size_t offset;
};

Page page_of(const ApiRequest& req) {
  Page p{query_count(req, "limit", kDefaultPageSize), query_count(req, "offset", 0)};
  if (p.limit > kMaxPageSize) throw BadRequest("limit may not exceed " + std::to_string(kMaxPageSize));
  return p;
}

template <typename T, typename F>
json paginate(const std::vector<T>& items, const Page& page, F&& to_item) {
  json out = json::array();
  for (std::size_t i = page.offset; i < items.size() && i < page.offset + page.limit; ++i) {
    out.push_back(to_item(items[i]));
  }
  return {{"total", items.size()}, {"limit", page.limit}, {"offset", page.offset}, {"items", out}};
}

json error_details(const Error& e) {
  if (const auto* sv = dynamic_cast<const SchemaViolation*>(&e)) {
    json attempts = json::array();
    for (const auto& a : sv->attempts()) {
      json violations = json::array();
      for (const auto& v : a.report.violations) {
        violations.push_back({{"field", v.field}, {"message", v.message}, {"observed", v.observed}});
      }
      attempts.push_back({{"violations", violations}, {"rawText", a.raw_text}});
    }
    return {{"attempts", attempts}};
  }
  if (const auto* pf = dynamic_cast<const ParseFailure*>(&e)) {
    json d = {{"position", pf->position()}};
    if (pf->row() >= 0) d["row"] = pf->row();
    return d;
  }
  if (const auto* vp = dynamic_cast<const VerdictParseFailure*>(&e)) return {{"rawText", vp->raw_text()}};
  if (const auto* sm = dynamic_cast<const StubMiss*>(&e)) return {{"digest", sm->digest()}};
  return nullptr;
}

RecordFilter record_filter(const ApiRequest& req) {
  RecordFilter f;
  if (auto run = query(req, "runId")) f.run_id = RunId(*run);
  f.jurisdiction = query(req, "jurisdiction");
  f.include_calibration = query(req, "includeCalibration").value_or("false") == "true";
  // Field ranges as min.<field>=x and max.<field>=y.
  std::map<std::string, FieldRange> ranges;
  for (const auto& [key, value] : req.query) {
    const bool is_min = key.rfind("min.", 0) == 0;
    const bool is_max = key.rfind("max.", 0) == 0;
    if (!is_min && !is_max) continue;
    const std::string name = key.substr(4);
    const auto n = parse_number(value);
    if (!n) throw BadRequest("range bound " + key + " is not a number");
    auto& r = ranges[name];
    r.field = name;
    (is_min ? r.min : r.max) = *n;
  }
  for (auto& [name, r] : ranges) f.ranges.push_back(std::move(r));
  return f;
}

AgentProfile profile_arg(Pipeline& p, const json& body, const char* key, const std::string& fallback) {
  AgentProfile profile = p.profile(opt_arg<std::string>(body, key).value_or(fallback));
  if (auto t = opt_arg<double>(body, "temperature")) {
    profile.temperature = *t;
    check_profile(profile);
  }
  return profile;
}

}  // namespace

int status_for(std::string_view code) {
  for (const auto& r : kRegistry) {
    if (r.code == code) return r.status;
  }
  return 500;
}

ApiResponse error_response(int status, std::string_view code, const std::string& message,
                           const json& details) {
  json err = {{"status", status}, {"code", code}, {"message", message}};
  if (!details.is_null()) err["details"] = details;
  return {status, "application/json", json{{"error", err}}.dump()};
}

// --- routes ---------------------------------------------------------------

struct ApiService::Routes {
  using Handler = std::function<ApiResponse(const ApiRequest&, const std::smatch&)>;
  struct Route {
    std::string method;
    std::regex pattern;
    Handler handler;
  };
  std::vector<Route> table;

  void add(std::string method, const std::string& pattern, Handler h) {
    table.push_back({std::move(method), std::regex(pattern), std::move(h)});
  }
};

ApiService::ApiService(Pipeline& pipeline)
    : pipeline_(pipeline), routes_(std::make_shared<Routes>()) {
  Pipeline& p = pipeline_;
  Routes& r = *routes_;
  const std::string id = "([^/]+)";

  r.add("GET", "/health", [&p](const ApiRequest&, const std::smatch&) {
    return ok({{"status", "ok"}, {"schemaVersion", p.schema().version}});
  });

  // documents
  r.add("POST", "/documents", [&p](const ApiRequest& req, const std::smatch&) {
    const DocId doc = p.store().ingest_document(document_from_json(parse_body(req)));
    return ok(to_json(p.store().get_document(doc)), 201);
  });
  r.add("GET", "/documents", [&p](const ApiRequest& req, const std::smatch&) {
    DocumentFilter f;
    f.jurisdiction = query(req, "jurisdiction");
    f.language = query(req, "language");
    return ok(paginate(p.store().list_documents(f), page_of(req),
                       [](const JudgmentDocument& d) { return to_json(d); }));
  });
  r.add("GET", "/documents/" + id, [&p](const ApiRequest&, const std::smatch& m) {
    return ok(to_json(p.store().get_document(DocId(m[1]))));
  });

  // runs and records
  r.add("POST", "/runs", [&p](const ApiRequest& req, const std::smatch&) {
    const json body = parse_body(req);
    const AgentProfile profile = profile_arg(p, body, "profile", "shirley-v1");
    DocumentFilter f;
    f.jurisdiction = opt_arg<std::string>(body, "jurisdiction");
    f.language = opt_arg<std::string>(body, "language");
    f.doc_ids = opt_arg<std::vector<DocId>>(body, "docIds").value_or(std::vector<DocId>{});
    const int workers = opt_arg<int>(body, "workers").value_or(p.config().workers);
    const AnalysisRun run = p.analyzer().run_batch(f, profile, workers);
    json out = to_json(run);
    json failures = json::array();
    for (const auto& fail : p.store().run_failures(run.run_id)) {
      failures.push_back({{"docId", fail.doc_id}, {"code", fail.code}, {"message", fail.message}});
    }
    out["failures"] = failures;
    return ok(out, 201);
  });
  r.add("GET", "/runs", [&p](const ApiRequest& req, const std::smatch&) {
    return ok(paginate(p.store().list_runs(), page_of(req), [](const AnalysisRun& run) { return to_json(run); }));
  });
  r.add("GET", "/runs/" + id, [&p](const ApiRequest&, const std::smatch& m) {
    return ok(to_json(p.store().get_run(RunId(m[1]))));
  });
  r.add("GET", "/runs/" + id + "/records", [&p](const ApiRequest& req, const std::smatch& m) {
    const RunId run(m[1]);
    p.store().get_run(run);
    RecordFilter f = record_filter(req);
    f.run_id = run;
    json out = paginate(p.store().query_records(f), page_of(req),
                        [](const StoredRecord& rec) { return to_json(rec); });
    out["runId"] = run;
    return ok(out);
  });
  r.add("GET", "/runs/" + id + "/failures", [&p](const ApiRequest&, const std::smatch& m) {
    const RunId run(m[1]);
    p.store().get_run(run);
    json out = json::array();
    for (const auto& f : p.store().run_failures(run)) {
      out.push_back({{"docId", f.doc_id}, {"code", f.code}, {"message", f.message}});
    }
    return ok({{"runId", run}, {"failures", out}});
  });
  r.add("GET", "/records", [&p](const ApiRequest& req, const std::smatch&) {
    return ok(paginate(p.store().query_records(record_filter(req)), page_of(req),
                       [](const StoredRecord& rec) { return to_json(rec); }));
  });

  // harnesses
  r.add("POST", "/calibrations", [&p](const ApiRequest& req, const std::smatch&) {
    const json body = parse_body(req);
    const CalibrationSpec spec = calibration_spec_from_json(body);
    return ok(to_json(p.analyzer().run_calibration(spec, profile_arg(p, body, "profile", "shirley-v1"))));
  });
  r.add("POST", "/repeatability", [&p](const ApiRequest& req, const std::smatch&) {
    const json body = parse_body(req);
    return ok(to_json(p.analyzer().run_repeatability(arg<DocId>(body, "docId"),
                                                     profile_arg(p, body, "profile", "shirley-v1"),
                                                     arg<int>(body, "n"))));
  });

  // aggregation
  auto records_for = [&p](const std::optional<std::string>& run) {
    RecordFilter f;
    if (run) {
      f.run_id = RunId(*run);
      p.store().get_run(*f.run_id);
    }
    return p.store().query_records(f);
  };
  r.add("GET", "/aggregate/deviations", [records_for](const ApiRequest& req, const std::smatch&) {
    const auto records = records_for(query(req, "runId"));
    json out = json::array();
    for (const auto& d : deviation_rank(records, query(req, "field").value_or("biasLevel"))) {
      out.push_back(to_json(d));
    }
    return ok({{"scores", out}});
  });
  r.add("GET", "/aggregate/cohorts", [records_for](const ApiRequest& req, const std::smatch&) {
    const auto records = records_for(query(req, "runId"));
    json out = json::array();
    for (const auto& c : cohort_stats(records, query(req, "groupBy").value_or("jurisdiction"))) {
      out.push_back(to_json(c));
    }
    return ok({{"cohorts", out}});
  });
  r.add("GET", "/aggregate/cross-border", [records_for](const ApiRequest& req, const std::smatch&) {
    const auto records = records_for(query(req, "runId"));
    return ok(to_json(cross_border_compare(records, query(req, "field").value_or("biasLevel"),
                                           query_number(req, "threshold").value_or(kDefaultCrossBorderThreshold))));
  });
  r.add("POST", "/aggregate/findings", [&p, records_for](const ApiRequest& req, const std::smatch&) {
    const json body = parse_body(req);
    const auto records = records_for(opt_arg<std::string>(body, "runId"));
    SelectionOptions opts;
    opts.field = opt_arg<std::string>(body, "field").value_or(opts.field);
    opts.cross_border_threshold = opt_arg<double>(body, "threshold").value_or(opts.cross_border_threshold);
    const int top_k = arg<int>(body, "topK");
    if (top_k < 0) throw BadRequest("topK must be non-negative");
    return ok(to_json(p.aggregator().compose_findings(records, profile_arg(p, body, "profile", "sam-v1"),
                                                      static_cast<std::size_t>(top_k), opts)),
              201);
  });
  r.add("GET", "/findings", [&p](const ApiRequest& req, const std::smatch&) {
    return ok(paginate(p.aggregator().list_findings(), page_of(req), [](const Finding& f) { return to_json(f); }));
  });
  r.add("GET", "/findings/" + id, [&p](const ApiRequest&, const std::smatch& m) {
    return ok(to_json(p.aggregator().get_finding(FindingId(m[1]))));
  });
  r.add("GET", "/findings/" + id + "/evidence", [&p](const ApiRequest&, const std::smatch& m) {
    return ok(p.aggregator().evidence_bundle(FindingId(m[1])));
  });

  // profiles
  r.add("POST", "/profiles", [&p](const ApiRequest& req, const std::smatch&) {
    return ok(to_json(p.registry().create(profile_from_json(parse_body(req)))), 201);
  });
  r.add("GET", "/profiles", [&p](const ApiRequest& req, const std::smatch&) {
    return ok(paginate(p.registry().list(), page_of(req), [](const AgentProfile& a) { return to_json(a); }));
  });
  r.add("GET", "/profiles/" + id, [&p](const ApiRequest& req, const std::smatch& m) {
    std::optional<int> rev;
    if (auto n = query_number(req, "revision")) rev = static_cast<int>(*n);
    return ok(to_json(p.registry().get(ProfileId(m[1]), rev)));
  });
  r.add("GET", "/profiles/" + id + "/revisions", [&p](const ApiRequest&, const std::smatch& m) {
    const ProfileId pid(m[1]);
    p.registry().get(pid);
    json out = json::array();
    for (const auto& a : p.registry().lineage(pid)) out.push_back(to_json(a));
    return ok({{"profileId", pid}, {"revisions", out}});
  });
  r.add("POST", "/profiles/" + id + "/revisions", [&p](const ApiRequest& req, const std::smatch& m) {
    const json body = parse_body(req);
    const ProfileId pid(m[1]);
    if (auto question = opt_arg<std::string>(body, "appendFocus")) {
      return ok(to_json(append_focus_instruction(p.registry(), pid, *question)), 201);
    }
    AgentProfile next = p.registry().get(pid);
    if (auto v = opt_arg<std::string>(body, "name")) next.name = *v;
    if (auto v = opt_arg<std::string>(body, "systemPrompt")) next.system_prompt = *v;
    if (auto v = opt_arg<double>(body, "temperature")) next.temperature = *v;
    if (auto v = opt_arg<std::map<std::string, double>>(body, "penaltySettings")) next.penalty_settings = *v;
    if (auto v = opt_arg<std::vector<DocId>>(body, "knowledgeBaseDocs")) next.knowledge_base_docs = *v;
    if (auto v = opt_arg<std::string>(body, "outputSchemaRef")) next.output_schema_ref = *v;
    return ok(to_json(p.registry().add_revision(std::move(next))), 201);
  });
  r.add("POST", "/prompts/refine", [&p](const ApiRequest& req, const std::smatch&) {
    const json body = parse_body(req);
    return ok(to_json(refine_prompt(p.gateway(), p.registry(),
                                    p.profile(opt_arg<std::string>(body, "profile").value_or("prompt-engineer-v1")),
                                    arg<std::string>(body, "intent"),
                                    opt_arg<std::vector<DocId>>(body, "strategyDocs").value_or(std::vector<DocId>{}))),
              201);
  });

  // arbitration
  r.add("POST", "/arbitrations", [&p](const ApiRequest& req, const std::smatch&) {
    const json body = parse_body(req);
    const Finding f = p.aggregator().get_finding(arg<FindingId>(body, "findingId"));
    return ok(to_json(p.arbitration().open_case(f)), 201);
  });
  r.add("GET", "/arbitrations", [&p](const ApiRequest& req, const std::smatch&) {
    return ok(paginate(p.arbitration().list_cases(), page_of(req),
                       [](const ArbitrationCase& c) { return to_json(c); }));
  });
  r.add("GET", "/arbitrations/" + id, [&p](const ApiRequest&, const std::smatch& m) {
    return ok(to_json(p.arbitration().get_case(CaseId(m[1]))));
  });
  r.add("POST", "/arbitrations/" + id + "/critic", [&p](const ApiRequest&, const std::smatch& m) {
    return ok(to_json(p.arbitration().generate_critic(CaseId(m[1]))), 201);
  });
  r.add("POST", "/arbitrations/" + id + "/advance", [&p](const ApiRequest&, const std::smatch& m) {
    return ok(to_json(p.arbitration().advance(CaseId(m[1]))));
  });
  r.add("POST", "/arbitrations/" + id + "/complete", [&p](const ApiRequest& req, const std::smatch& m) {
    const json body = parse_body(req);
    return ok(to_json(p.arbitration().run_to_completion(
        CaseId(m[1]), opt_arg<int>(body, "maxTurns").value_or(kDefaultMaxTurns))));
  });
  r.add("GET", "/arbitrations/" + id + "/transcript", [&p](const ApiRequest& req, const std::smatch& m) {
    const ArbitrationCase c = p.arbitration().get_case(CaseId(m[1]));
    if (query(req, "format").value_or("json") == "text") {
      return ApiResponse{200, "text/plain; charset=utf-8", transcript_text(c)};
    }
    json turns = json::array();
    for (const auto& t : c.transcript) turns.push_back(to_json(t));
    return ok({{"caseId", c.case_id},
               {"phase", to_string(c.phase)},
               {"turns", turns},
               {"verdict", c.verdict ? to_json(*c.verdict) : json(nullptr)},
               {"chainValid", verify_chain(c.transcript)}});
  });

  // export
  r.add("GET", "/export/csv", [&p](const ApiRequest& req, const std::smatch&) {
    const auto run = query(req, "runId");
    if (!run) throw BadRequest("missing query parameter runId");
    return ApiResponse{200, "text/csv; charset=utf-8", p.store().export_run_csv(RunId(*run))};
  });
}

ApiResponse ApiService::handle(const ApiRequest& req) {
  bool path_matched = false;
  for (const auto& route : routes_->table) {
    std::smatch m;
    if (!std::regex_match(req.path, m, route.pattern)) continue;
    path_matched = true;
    if (route.method != req.method) continue;
    try {
      return route.handler(req, m);
    } catch (const TurnLimitExceeded& e) {
      json details;
      try {
        details = {{"case", to_json(pipeline_.arbitration().get_case(CaseId(m[1])))}};
      } catch (const std::exception&) {
      }
      return error_response(409, to_string(e.code()), e.what(), details);
    } catch (const Error& e) {
      const auto code = to_string(e.code());
      return error_response(status_for(code), code, e.what(), error_details(e));
    } catch (const BadRequest& e) {
      return error_response(400, "bad_request", e.what());
    } catch (const std::exception& e) {
      return error_response(500, "internal_error", e.what());
    }
  }
  if (path_matched) {
    return error_response(405, "method_not_allowed", req.method + " not allowed on " + req.path);
  }
  return error_response(404, "route_not_found", "no route for " + req.method + " " + req.path);
}

// --- HTTP adapter -----------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(ApiService& api, ServerOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
  auto forward = [&api](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query[k] = v;
    r.body = req.body;
    const ApiResponse out = api.handle(r);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  auto& s = impl_->server;
  s.Get(".*", forward);
  s.Post(".*", forward);
  s.Put(".*", forward);
  s.Delete(".*", forward);
  s.Patch(".*", forward);
  if (!options_.ui_dir.empty() && !s.set_mount_point("/ui", options_.ui_dir)) {
    throw ConfigurationError("ui directory " + options_.ui_dir + " does not exist");
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
  auto& s = impl_->server;
  if (options_.port == 0) {
    port_ = s.bind_to_any_port(options_.host);
  } else if (s.bind_to_port(options_.host, options_.port)) {
    port_ = options_.port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) {
    throw ConfigurationError("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
  thread_ = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return port_;
}

void HttpServer::run() {
  auto& s = impl_->server;
  if (!s.listen(options_.host, options_.port)) {
    throw ConfigurationError("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
}

void HttpServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

ServerOptions parse_listen(const std::string& listen) {
  ServerOptions o;
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw ConfigurationError("listen address must be host:port");
  if (colon > 0) o.host = listen.substr(0, colon);
  const auto port = parse_number(listen.substr(colon + 1));
  if (!port || *port < 0 || *port > 65535 || *port != std::floor(*port)) {
    throw ConfigurationError("bad port in listen address " + listen);
  }
  o.port = static_cast<int>(*port);
  return o;
}

}  // namespace saap
