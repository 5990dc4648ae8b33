#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "posctl/evolution.hpp"
#include "posctl/system_model.hpp"

namespace posctl {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.3.0";

enum ExitCode : int {
  exit_ok = 0,
  exit_software = 1,
  exit_validation = 2,
  exit_infeasible = 3,
  exit_nonconvergence = 4,
};

/// Schema violation in a config file, with the offending line and key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& source, int line, const std::string& key,
              const std::string& what);

  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

struct ConfigEntry {
  std::string value;
  int line = 0;
};

struct ConfigSection {
  std::string name;
  int line = 0;
  std::vector<std::pair<std::string, ConfigEntry>> entries;

  const ConfigEntry* find(const std::string& key) const;
};

/// Sections in file order. Grammar: `[name]` headers, `key = value` lines,
/// `#` starts a comment.
struct RawConfig {
  std::string source;
  std::vector<ConfigSection> sections;

  ConfigSection* find(const std::string& name);
  const ConfigSection* find(const std::string& name) const;
  /// Sets `section.key` (split at the last dot); the section must exist.
  void set(const std::string& dotted, const std::string& value);
};

RawConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
RawConfig parse_config_file(const std::string& path);

enum class DataKind { constant, cosine_bump, modes, random };

struct DataSpec {
  DataKind kind = DataKind::constant;
  Eigen::VectorXd values;
  Eigen::VectorXd amplitude;
  int mode = 1;
  Eigen::MatrixXd coeff;  // components x modes, for DataKind::modes
  int active_modes = 4;
};

/// Mode coefficients at `highest_mode`; random data is shifted to be
/// nonnegative on the grid.
SpectralState build_data(const DataSpec& data, int components, int highest_mode,
                         std::uint64_t seed);

struct TaskSpec {
  std::string name;
  std::string type;
  int line = 0;
  std::map<std::string, ConfigEntry> params;
};

struct ScenarioConfig {
  std::string source;
  SystemSpec spec;
  DataSpec initial;
  DataSpec target;
  int modes = kDefaultModes;
  std::optional<int> steps;
  std::uint64_t seed = 0;
  std::string output;
  std::vector<TaskSpec> tasks;
};

/// Validates the whole schema before anything is computed.
ScenarioConfig load_scenario(const RawConfig& raw);

struct RunOverrides {
  std::optional<std::string> out;
  std::optional<int> modes;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;

  std::string describe() const;
};

void apply_overrides(ScenarioConfig& config, const RunOverrides& overrides);

struct TaskOutcome {
  std::string name;
  std::string type;
  std::string status;  // ok | infeasible | nonconvergent | invalid | error
  int exit_code = exit_ok;
  std::string message;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::vector<std::string> artifacts;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_path;
  std::string config_hash;
  std::string overrides;
  std::string output_dir;
  double wall_clock_seconds = 0.0;
  int exit_code = exit_ok;
  std::string error;
  std::vector<TaskOutcome> tasks;
  std::vector<std::string> artifacts;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
  /// Writes manifest.json into output_dir.
  void write() const;
};

/// 64-bit FNV-1a, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// Most severe code: software > validation > non-convergence > infeasible.
int combine_exit_codes(const std::vector<int>& codes);

RunManifest run_scenario(const ScenarioConfig& config, const std::string& output_dir);

/// Parses, validates and runs a config file; always writes one manifest.
RunManifest run_config(const std::string& config_path, const RunOverrides& overrides);

/// One sub-run per value of `section.key`, in `out/run_<i>`, plus sweep.csv
/// with one row per value and task.
RunManifest sweep_config(const std::string& config_path, const std::string& parameter,
                         const std::vector<std::string>& values, const RunOverrides& overrides);

/// Trajectory CSV: time, min_y<i> per component, l2_norm.
void write_trajectory_csv(const std::string& path, const TrajectoryRecord& trajectory,
                          int every = 1);

/// Control CSV: time (step midpoint), then u<c>_<q> for channel c and mode q.
void write_control_csv(const std::string& path, const ControlSignal& control, int every = 1);

}  // namespace posctl
