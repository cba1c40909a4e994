#include "carbonwatch/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "carbonwatch/errors.hpp"

namespace carbonwatch {

using nlohmann::json;

void TrackerConfig::validate() const {
  if (!open_ended) {
    if (total_epochs < 1) throw ConfigError("total_epochs must be at least 1");
    if (epochs_before_pred < 1) throw ConfigError("epochs_before_pred must be at least 1");
    const int monitor = effective_monitor_epochs();
    if (epochs_before_pred > monitor) {
      throw ConfigError("epochs_before_pred must not exceed monitor_epochs");
    }
    if (monitor > total_epochs) throw ConfigError("monitor_epochs must not exceed total_epochs");
  }
  if (!(sampler.interval_s > 0.0)) throw ConfigError("sampling interval must be positive");
  if (!(intensity.refresh_period_s > 0.0)) throw ConfigError("refresh period must be positive");
  if (!(intensity.http.timeout_s > 0.0)) throw ConfigError("HTTP timeout must be positive");
  if (intensity.http.retries < 0) throw ConfigError("HTTP retries must be non-negative");
  try {
    pue.validate();
    conversion.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (emissions_budget_g && !(*emissions_budget_g > 0.0)) {
    throw ConfigError("emissions budget must be positive");
  }
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

std::set<Component> parse_components(const json& j) {
  std::set<Component> out;
  for (const auto& item : j) {
    const auto c = parse_component(item.get<std::string>());
    if (!c) throw ConfigError("unknown component '" + item.get<std::string>() + "'");
    out.insert(*c);
  }
  return out;
}

std::set<Component> parse_components_list(const std::string& text) {
  json arr = json::array();
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) arr.push_back(item);
  }
  return parse_components(arr);
}

}  // namespace

TrackerConfig config_from_json(const json& j, TrackerConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j,
             {"total_epochs", "epochs_before_pred", "monitor_epochs", "open_ended", "components",
              "sampling_interval_s", "powercap_root", "nvml_library", "replay_trace",
              "replay_loop", "pue", "log_dir", "experiment", "region", "emissions_budget_g",
              "no_net", "fixtures_dir", "handle_signals", "verbose", "output_prefix",
              "exclude_first_epoch", "car_g_per_km", "intensity"},
             "");
  try {
    if (j.contains("total_epochs")) c.total_epochs = j["total_epochs"].get<int>();
    if (j.contains("epochs_before_pred")) c.epochs_before_pred = j["epochs_before_pred"].get<int>();
    if (j.contains("monitor_epochs")) {
      if (j["monitor_epochs"].is_null()) {
        c.monitor_epochs.reset();
      } else {
        c.monitor_epochs = j["monitor_epochs"].get<int>();
      }
    }
    if (j.contains("open_ended")) c.open_ended = j["open_ended"].get<bool>();
    if (j.contains("components")) c.sampler.components = parse_components(j["components"]);
    if (j.contains("sampling_interval_s")) c.sampler.interval_s = j["sampling_interval_s"].get<double>();
    if (j.contains("powercap_root")) c.sampler.powercap_root = j["powercap_root"].get<std::string>();
    if (j.contains("nvml_library")) c.sampler.nvml_library = j["nvml_library"].get<std::string>();
    if (j.contains("replay_trace")) {
      if (j["replay_trace"].is_null()) {
        c.sampler.replay_trace.reset();
      } else {
        c.sampler.replay_trace = j["replay_trace"].get<std::string>();
      }
    }
    if (j.contains("replay_loop")) c.sampler.replay_loop = j["replay_loop"].get<bool>();
    if (j.contains("pue")) c.pue.pue = j["pue"].get<double>();
    if (j.contains("log_dir")) c.log_dir = j["log_dir"].get<std::string>();
    if (j.contains("experiment")) c.experiment = j["experiment"].get<std::string>();
    if (j.contains("region")) c.region = j["region"].get<std::string>();
    if (j.contains("emissions_budget_g")) c.emissions_budget_g = j["emissions_budget_g"].get<double>();
    if (j.contains("no_net")) c.no_net = j["no_net"].get<bool>();
    if (j.contains("fixtures_dir")) c.fixtures_dir = j["fixtures_dir"].get<std::string>();
    if (j.contains("handle_signals")) c.handle_signals = j["handle_signals"].get<bool>();
    if (j.contains("verbose")) c.verbose = j["verbose"].get<bool>();
    if (j.contains("output_prefix")) c.output_prefix = j["output_prefix"].get<std::string>();
    if (j.contains("exclude_first_epoch")) {
      c.predictor.exclude_first_epoch = j["exclude_first_epoch"].get<bool>();
    }
    if (j.contains("car_g_per_km")) c.conversion.car_g_per_km = j["car_g_per_km"].get<double>();
    if (j.contains("intensity")) {
      const auto& in = j["intensity"];
      check_keys(in,
                 {"timeout_s", "retries", "refresh_period_s", "default_intensity_file",
                  "geolocation_url", "dk_base_url", "gb_base_url"},
                 "intensity.");
      if (in.contains("timeout_s")) c.intensity.http.timeout_s = in["timeout_s"].get<double>();
      if (in.contains("retries")) c.intensity.http.retries = in["retries"].get<int>();
      if (in.contains("refresh_period_s")) {
        c.intensity.refresh_period_s = in["refresh_period_s"].get<double>();
      }
      if (in.contains("default_intensity_file")) {
        c.intensity.default_intensity_file = in["default_intensity_file"].get<std::string>();
      }
      if (in.contains("geolocation_url")) {
        c.intensity.endpoints.geolocation = in["geolocation_url"].get<std::string>();
      }
      if (in.contains("dk_base_url")) c.intensity.endpoints.dk_base = in["dk_base_url"].get<std::string>();
      if (in.contains("gb_base_url")) c.intensity.endpoints.gb_base = in["gb_base_url"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

json to_json(const TrackerConfig& c) {
  json j;
  j["total_epochs"] = c.total_epochs;
  j["epochs_before_pred"] = c.epochs_before_pred;
  j["monitor_epochs"] = c.effective_monitor_epochs();
  j["open_ended"] = c.open_ended;
  j["components"] = json::array();
  for (auto comp : c.sampler.components) j["components"].push_back(to_string(comp));
  j["sampling_interval_s"] = c.sampler.interval_s;
  j["powercap_root"] = c.sampler.powercap_root.string();
  j["nvml_library"] = c.sampler.nvml_library;
  j["replay_trace"] = c.sampler.replay_trace ? json(c.sampler.replay_trace->string()) : json(nullptr);
  j["replay_loop"] = c.sampler.replay_loop;
  j["pue"] = c.pue.pue;
  if (c.log_dir) j["log_dir"] = c.log_dir->string();
  j["experiment"] = c.experiment;
  if (c.region) j["region"] = *c.region;
  if (c.emissions_budget_g) j["emissions_budget_g"] = *c.emissions_budget_g;
  j["no_net"] = c.no_net;
  if (c.fixtures_dir) j["fixtures_dir"] = c.fixtures_dir->string();
  j["handle_signals"] = c.handle_signals;
  j["verbose"] = c.verbose;
  j["output_prefix"] = c.output_prefix;
  j["exclude_first_epoch"] = c.predictor.exclude_first_epoch;
  j["car_g_per_km"] = c.conversion.car_g_per_km;
  json in;
  in["timeout_s"] = c.intensity.http.timeout_s;
  in["retries"] = c.intensity.http.retries;
  in["refresh_period_s"] = c.intensity.refresh_period_s;
  if (c.intensity.default_intensity_file) {
    in["default_intensity_file"] = c.intensity.default_intensity_file->string();
  }
  in["geolocation_url"] = c.intensity.endpoints.geolocation;
  in["dk_base_url"] = c.intensity.endpoints.dk_base;
  in["gb_base_url"] = c.intensity.endpoints.gb_base;
  j["intensity"] = in;
  return j;
}

TrackerConfig load_config_file(const std::filesystem::path& path, TrackerConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

std::optional<std::filesystem::path> default_config_path(const EnvLookup& env) {
  std::vector<std::filesystem::path> candidates;
  if (auto p = env("CARBONWATCH_CONFIG")) candidates.emplace_back(*p);
  if (auto x = env("XDG_CONFIG_HOME")) {
    candidates.push_back(std::filesystem::path(*x) / "carbonwatch" / "config.json");
  }
  if (auto h = env("HOME")) {
    candidates.push_back(std::filesystem::path(*h) / ".config" / "carbonwatch" / "config.json");
  }
  for (const auto& p : candidates) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(p, ec)) return p;
  }
  return std::nullopt;
}

namespace {

double env_double(const std::string& name, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(name + " must be a number");
}

int env_int(const std::string& name, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(name + " must be an integer");
}

bool truthy(const std::string& v) { return !(v.empty() || v == "0" || v == "false"); }

}  // namespace

void apply_env_overrides(TrackerConfig& c, const EnvLookup& env) {
  if (auto v = env("CARBONWATCH_PUE")) c.pue.pue = env_double("CARBONWATCH_PUE", *v);
  if (auto v = env("CARBONWATCH_REGION")) c.region = *v;
  if (auto v = env("CARBONWATCH_LOG_DIR")) c.log_dir = *v;
  if (auto v = env("CARBONWATCH_INTERVAL")) {
    c.sampler.interval_s = env_double("CARBONWATCH_INTERVAL", *v);
  }
  if (auto v = env("CARBONWATCH_COMPONENTS")) c.sampler.components = parse_components_list(*v);
  if (auto v = env("CARBONWATCH_REPLAY")) c.sampler.replay_trace = *v;
  if (auto v = env("CARBONWATCH_NO_NET")) c.no_net = truthy(*v);
  if (auto v = env("CARBONWATCH_FIXTURES")) c.fixtures_dir = *v;
  if (auto v = env("CARBONWATCH_EPOCHS")) c.total_epochs = env_int("CARBONWATCH_EPOCHS", *v);
  if (auto v = env("CARBONWATCH_PRED_AFTER")) {
    c.epochs_before_pred = env_int("CARBONWATCH_PRED_AFTER", *v);
  }
  if (auto v = env("CARBONWATCH_MONITOR")) c.monitor_epochs = env_int("CARBONWATCH_MONITOR", *v);
}

bool tracking_disabled_by_env(const EnvLookup& env) {
  auto v = env("CARBONWATCH_DISABLE");
  return v && truthy(*v);
}

}  // namespace carbonwatch
