#pragma once

#include <stdexcept>
#include <string>

namespace graphloc {

// Malformed text input (maps, scans, trajectories, configs). Carries the
// 1-based line number of the offending record.
struct ParseError : std::runtime_error {
  int line;
  ParseError(const std::string& what_kind, const std::string& msg,
             int line_number)
      : std::runtime_error(what_kind + " parse error at line " +
                           std::to_string(line_number) + ": " + msg),
        line(line_number) {}
};

// Invalid scenario/pipeline configuration values.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg)
      : std::runtime_error("config error: " + msg) {}
};

}  // namespace graphloc
