#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "graphloc/errors.hpp"
#include "graphloc/estimator.hpp"
#include "graphloc/scan_sim.hpp"

namespace graphloc {

// Plain-text key=value configuration. '#' starts a comment. Keys read
// through the typed getters are marked consumed so callers can reject
// unknown leftovers.
class ConfigMap {
 public:
  static ConfigMap from_file(const std::string& path);
  static ConfigMap from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt);
  double get_double(const std::string& key, double dflt);
  int get_int(const std::string& key, int dflt);
  uint64_t get_uint64(const std::string& key, uint64_t dflt);
  bool get_bool(const std::string& key, bool dflt);

  // Unconsumed keys with their line numbers.
  std::vector<std::pair<std::string, int>> unconsumed() const;
  void require_all_consumed() const;  // throws ConfigError listing leftovers

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
  };
  std::map<std::string, Entry> entries_;
};

// Consumes the pipeline keys (sensor.*, graph.*, frontend.*, match.*, est.*).
TrackerConfig make_tracker_config(ConfigMap& cfg);

// Consumes scenario.* keys plus the sensor overrides shared with the tracker.
// Returns the scenario kind through the out-parameter.
ScenarioParams make_scenario_params(ConfigMap& cfg, std::string& kind);

}  // namespace graphloc
