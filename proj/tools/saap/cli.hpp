#pragma once

// The saap command line tool. Every command is served by the same ApiService
// routes the HTTP server exposes, so both front ends share one behaviour.

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "saap/errors.hpp"
#include "saap/pipeline.hpp"

namespace saap::cli {

// Exit codes. Error codes from the core map to 10 + their registry index.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;     // bad flags or arguments
inline constexpr int kExitIo = 3;        // unreadable input or unwritable output
inline constexpr int kExitInternal = 4;  // unexpected exception
inline constexpr int kExitBadRequest = 5;

int exit_code_for(ErrorCode code);
// Exit code for an error code name as found in API error bodies.
int exit_code_for(std::string_view code);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

// Resolved settings shared by all commands.
struct CliConfig {
  std::string store_path = "saap.db";
  ProviderBinding binding;
  std::string schema_version = std::string(kDefaultSchemaVersion);
  std::string listen_address = "127.0.0.1:8080";
  int workers = 1;
  std::string audit_log;
  std::string ui_dir;
};

// Settings file: one `key = value` per line, `#` starts a comment.
std::map<std::string, std::string> parse_config_file(const std::string& text);

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env);

}  // namespace saap::cli
