#pragma once

// HTTP facade over the pipeline. ApiService maps requests to module calls
// without any transport; HttpServer binds it to a socket.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "saap/pipeline.hpp"

namespace saap {

struct ApiRequest {
  std::string method;  // GET, POST, ...
  std::string path;    // without query string
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

// HTTP status for a registry error code; 500 for unknown codes.
int status_for(std::string_view code);

// {"error": {"status", "code", "message", "details"?}}
ApiResponse error_response(int status, std::string_view code, const std::string& message,
                           const nlohmann::json& details = nullptr);

inline constexpr std::size_t kDefaultPageSize = 100;
inline constexpr std::size_t kMaxPageSize = 1000;

class ApiService {
 public:
  explicit ApiService(Pipeline& pipeline);

  ApiResponse handle(const ApiRequest& request);

 private:
  struct Routes;
  Pipeline& pipeline_;
  std::shared_ptr<Routes> routes_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 = any free port
  std::string ui_dir;  // served under /ui when set
};

class HttpServer {
 public:
  HttpServer(ApiService& api, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServerOptions options_;
  int port_ = 0;
  std::thread thread_;
};

// Splits "host:port" (host may be empty); throws ConfigurationError.
ServerOptions parse_listen(const std::string& listen);

}  // namespace saap
