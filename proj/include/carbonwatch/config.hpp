#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "carbonwatch/energy.hpp"
#include "carbonwatch/intensity.hpp"
#include "carbonwatch/predictor.hpp"
#include "carbonwatch/reporting.hpp"
#include "carbonwatch/sampling.hpp"

namespace carbonwatch {

/// Settings for one tracked session. Every field has a config-file key of
/// the same name (see README); nested structs map to nested objects.
struct TrackerConfig {
  int total_epochs = 1;
  int epochs_before_pred = 1;
  /// Stop measuring after this many epochs. Defaults to total_epochs.
  std::optional<int> monitor_epochs;
  /// The epoch count is not known up front (the `track` command). Disables
  /// prediction and the monitor cap.
  bool open_ended = false;

  SamplerConfig sampler;
  PueConfig pue;
  IntensityConfig intensity;
  ConversionFactors conversion;
  PredictorOptions predictor;

  std::optional<std::filesystem::path> log_dir;
  /// Subdirectory of log_dir, one per experiment.
  std::string experiment;
  std::optional<std::string> region;
  std::optional<double> emissions_budget_g;
  bool no_net = false;
  std::optional<std::filesystem::path> fixtures_dir;
  bool handle_signals = true;
  bool verbose = false;
  std::string output_prefix = "carbonwatch";

  int effective_monitor_epochs() const { return monitor_epochs.value_or(total_epochs); }
  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

/// Applies the keys present in `j` on top of `base`. Unknown keys are
/// rejected so typos surface before training starts.
TrackerConfig config_from_json(const nlohmann::json& j, TrackerConfig base = {});
nlohmann::json to_json(const TrackerConfig& config);

TrackerConfig load_config_file(const std::filesystem::path& path, TrackerConfig base = {});

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// `$CARBONWATCH_CONFIG`, else `$XDG_CONFIG_HOME/carbonwatch/config.json`, else
/// `~/.config/carbonwatch/config.json`; only returned if the file exists.
std::optional<std::filesystem::path> default_config_path(const EnvLookup& env = process_env());

/// CARBONWATCH_PUE, _REGION, _LOG_DIR, _INTERVAL, _COMPONENTS, _REPLAY,
/// _NO_NET, _FIXTURES, _EPOCHS, _PRED_AFTER, _MONITOR.
void apply_env_overrides(TrackerConfig& config, const EnvLookup& env = process_env());

/// True when CARBONWATCH_DISABLE is set to anything but "", "0" or "false".
bool tracking_disabled_by_env(const EnvLookup& env = process_env());

}  // namespace carbonwatch
