#pragma once

// Flat `key = value` run configuration shared by every CLI command.
//
// Lines are `key = value`; blank lines and lines starting with '#' are
// ignored. Unknown keys are rejected. Every key has a default (see
// RunConfig::schema() or `driftplan config`), and list values are
// comma-separated.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "driftplan/controllers.hpp"
#include "driftplan/episode.hpp"
#include "driftplan/field.hpp"
#include "driftplan/policy.hpp"
#include "driftplan/training.hpp"

namespace driftplan {

class RunConfig {
 public:
  struct Key {
    std::string name;
    std::string default_value;
    std::string help;
  };
  static const std::vector<Key>& schema();

  RunConfig();

  // Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  void set_line(const std::string& assignment);  // "key=value"
  void load(std::istream& in);
  void load_file(const std::filesystem::path& path);

  bool explicitly_set(const std::string& key) const { return explicit_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::uint64_t unsigned_integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;  // empty value -> empty list

  // Every key in schema order, one `key = value` per line.
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

FieldPatternSpec pattern_spec(const RunConfig& cfg);
// field.file when set (current CSV schema), otherwise the generated pattern;
// field.crop applied last.
std::shared_ptr<const DisturbanceField> load_field(const RunConfig& cfg);
MotionParams motion_params(const RunConfig& cfg);
EnvSpec env_spec(const RunConfig& cfg, std::shared_ptr<const DisturbanceField> field);
RecedingHorizonConfig ilqr_controller_config(const RunConfig& cfg);
PolicyConfig policy_config(const RunConfig& cfg, int grid_w, int grid_h);
TrainingConfig training_config(const RunConfig& cfg);
ActionSelection action_selection(const RunConfig& cfg);
CostAveraging cost_averaging(const RunConfig& cfg);

}  // namespace driftplan
