#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace saap {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now_ms();

// ISO-8601 UTC with millisecond precision, e.g. 2024-03-01T12:00:00.000Z.
std::string format_timestamp(Timestamp t);
std::optional<Timestamp> parse_timestamp(std::string_view text);

// Shortest decimal text that parses back to exactly the same double.
std::string format_number(double value);

// Strict decimal parse: the whole input must be consumed. No leading '+',
// no surrounding whitespace, no hex, no inf/nan.
std::optional<double> parse_number(std::string_view text);

std::string sha256_hex(std::string_view data);

}  // namespace saap
