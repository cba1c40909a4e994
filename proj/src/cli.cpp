#include "carbonwatch/cli.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "carbonwatch/config.hpp"
#include "carbonwatch/errors.hpp"
#include "carbonwatch/intensity.hpp"
#include "carbonwatch/session_log.hpp"
#include "carbonwatch/timeutil.hpp"
#include "carbonwatch/tracker.hpp"
#include "carbonwatch/version.hpp"

extern char** environ;

namespace carbonwatch {

using nlohmann::json;

EstimateResult estimate(const EstimateInput& in) {
  auto positive = [](double v, const char* what) {
    if (!std::isfinite(v) || v <= 0.0) throw InvalidArgument(std::string(what) + " must be positive");
  };
  positive(in.flops_total, "total FLOPs");
  positive(in.device_flops, "device FLOP/s");
  positive(in.tdp_w, "TDP");
  positive(in.intensity_g_per_kwh, "carbon intensity");
  positive(in.car_g_per_km, "car emission factor");
  if (in.device_count < 1) throw InvalidArgument("device count must be at least 1");
  PueConfig{in.pue}.validate();

  EstimateResult r;
  r.compute_seconds = in.flops_total / in.device_flops;
  r.device_days = r.compute_seconds / 86400.0;
  r.wall_seconds = r.compute_seconds / in.device_count;
  r.energy_kwh = in.tdp_w * r.compute_seconds * in.pue / kJoulesPerKwh;
  r.emissions_g = r.energy_kwh * in.intensity_g_per_kwh;
  r.km_by_car = r.emissions_g / in.car_g_per_km;
  return r;
}

json to_json(const EstimateResult& r) {
  return {{"compute_seconds", r.compute_seconds}, {"device_days", r.device_days},
          {"wall_seconds", r.wall_seconds},       {"energy_kwh", r.energy_kwh},
          {"emissions_g", r.emissions_g},         {"emissions_kg", r.emissions_g / 1000.0},
          {"km_by_car", r.km_by_car}};
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

struct CommonFlags {
  std::string config_path;
  int epochs = 0;
  int pred_after = 0;
  int monitor = 0;
  double interval = 60.0;
  double sample_interval = 0.0;
  double pue = 0.0;
  std::string region;
  std::string log_dir;
  std::string experiment;
  std::string components;
  std::string replay;
  std::string fixtures;
  std::string format = "text";
  bool no_net = false;
  bool verbose = false;

  CLI::Option* epochs_opt = nullptr;
  CLI::Option* pred_after_opt = nullptr;
  CLI::Option* monitor_opt = nullptr;
  CLI::Option* sample_interval_opt = nullptr;
  CLI::Option* pue_opt = nullptr;
};

void add_format_flag(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--format", f.format, "Output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
}

void add_session_flags(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config_path, "Config file (JSON)");
  f.epochs_opt = sub->add_option("--epochs", f.epochs, "Total epochs expected")
                     ->check(CLI::PositiveNumber);
  f.pred_after_opt = sub->add_option("--pred-after", f.pred_after, "Epochs before predicting")
                         ->check(CLI::PositiveNumber);
  f.monitor_opt = sub->add_option("--monitor", f.monitor, "Epochs to measure before stopping")
                      ->check(CLI::PositiveNumber);
  sub->add_option("--interval", f.interval, "Epoch length in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  f.sample_interval_opt =
      sub->add_option("--sample-interval", f.sample_interval, "Seconds between power samples")
          ->check(CLI::PositiveNumber);
  f.pue_opt = sub->add_option("--pue", f.pue, "Power usage effectiveness")->check(CLI::Range(1.0, 100.0));
  sub->add_option("--region", f.region, "Country code overriding IP geolocation");
  sub->add_option("--log-dir", f.log_dir, "Directory for session logs");
  sub->add_option("--experiment", f.experiment, "Log subdirectory for this experiment");
  sub->add_option("--components", f.components, "Comma-separated: gpu,cpu,dram");
  sub->add_option("--replay", f.replay, "Replay power trace instead of hardware");
  sub->add_option("--fixtures", f.fixtures, "Serve intensity requests from recorded fixtures");
  sub->add_flag("--no-net", f.no_net, "Never use the network; fall back to defaults");
  sub->add_flag("-v,--verbose", f.verbose, "Print informational messages");
  add_format_flag(sub, f);
}

TrackerConfig build_config(const CommonFlags& f) {
  TrackerConfig c;
  if (!f.config_path.empty()) {
    c = load_config_file(f.config_path, c);
  } else if (auto path = default_config_path()) {
    c = load_config_file(*path, c);
  }
  apply_env_overrides(c);
  if (f.epochs_opt && f.epochs_opt->count()) c.total_epochs = f.epochs;
  if (f.pred_after_opt && f.pred_after_opt->count()) c.epochs_before_pred = f.pred_after;
  if (f.monitor_opt && f.monitor_opt->count()) c.monitor_epochs = f.monitor;
  if (f.sample_interval_opt && f.sample_interval_opt->count()) c.sampler.interval_s = f.sample_interval;
  if (f.pue_opt && f.pue_opt->count()) c.pue.pue = f.pue;
  if (!f.region.empty()) c.region = f.region;
  if (!f.log_dir.empty()) c.log_dir = f.log_dir;
  if (!f.experiment.empty()) c.experiment = f.experiment;
  if (!f.components.empty()) {
    c = config_from_json(json{{"components", [&] {
                                 json arr = json::array();
                                 std::stringstream ss(f.components);
                                 std::string item;
                                 while (std::getline(ss, item, ',')) {
                                   if (!item.empty()) arr.push_back(item);
                                 }
                                 return arr;
                               }()}},
                         c);
  }
  if (!f.replay.empty()) c.sampler.replay_trace = f.replay;
  if (!f.fixtures.empty()) c.fixtures_dir = f.fixtures;
  if (f.no_net) c.no_net = true;
  if (f.verbose) c.verbose = true;
  return c;
}

std::shared_ptr<HttpTransport> make_transport(const TrackerConfig& c) {
  if (c.fixtures_dir) return FixtureTransport::from_directory(*c.fixtures_dir);
  if (c.no_net) return std::make_shared<OfflineTransport>();
  return std::make_shared<NetworkTransport>();
}

// --- track ----------------------------------------------------------------

std::atomic<pid_t> g_child{0};

extern "C" void forward_signal(int sig) {
  const pid_t pid = g_child.load();
  if (pid > 0) kill(pid, sig);
}

int cmd_track(const CommonFlags& f, const std::vector<std::string>& command, std::ostream& out,
              std::ostream& err) {
  if (command.empty()) {
    err << "carbonwatch: track needs a command to run\n";
    return kExitUsage;
  }
  TrackerConfig config;
  try {
    config = build_config(f);
    config.open_ended = !(f.epochs_opt && f.epochs_opt->count());
    config.handle_signals = false;
    config.validate();
  } catch (const std::exception& e) {
    err << "carbonwatch: " << e.what() << "\n";
    return kExitUsage;
  }

  TrackerDeps deps;
  deps.out = &out;
  deps.err = &err;
  std::unique_ptr<Tracker> tracker;
  try {
    tracker = std::make_unique<Tracker>(config, std::move(deps));
  } catch (const std::exception& e) {
    err << "carbonwatch: " << e.what() << "\n";
    return kExitUsage;
  }

  std::vector<char*> argv;
  for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  sigset_t defaults;
  sigemptyset(&defaults);
  sigaddset(&defaults, SIGINT);
  sigaddset(&defaults, SIGTERM);
  posix_spawnattr_setsigdefault(&attr, &defaults);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETSIGDEF);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], nullptr, &attr, argv.data(), environ);
  posix_spawnattr_destroy(&attr);
  if (rc != 0) {
    err << "carbonwatch: cannot run '" << command[0] << "': " << std::strerror(rc) << "\n";
    tracker->stop();
    return kExitRuntime;
  }

  g_child.store(pid);
  struct sigaction sa {};
  sa.sa_handler = forward_signal;
  sigemptyset(&sa.sa_mask);
  struct sigaction old_int {};
  struct sigaction old_term {};
  sigaction(SIGINT, &sa, &old_int);
  sigaction(SIGTERM, &sa, &old_term);

  std::mutex mutex;
  std::condition_variable cv;
  bool done = false;
  int status = 0;
  std::thread waiter([&] {
    int st = 0;
    while (waitpid(pid, &st, 0) < 0 && errno == EINTR) {
    }
    std::lock_guard lock(mutex);
    status = st;
    done = true;
    cv.notify_all();
  });

  const auto epoch_length = std::chrono::duration<double>(f.interval);
  while (true) {
    tracker->epoch_start();
    bool finished = false;
    {
      std::unique_lock lock(mutex);
      finished = cv.wait_for(lock, epoch_length, [&] { return done; });
    }
    tracker->epoch_end();
    if (finished) break;
  }
  waiter.join();
  tracker->stop();

  sigaction(SIGINT, &old_int, nullptr);
  sigaction(SIGTERM, &old_term, nullptr);
  g_child.store(0);

  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return kExitRuntime;
}

// --- report ---------------------------------------------------------------

struct SessionRow {
  std::string id;
  std::string path;
  std::string experiment;
  std::string started_at;
  int epochs = 0;
  std::optional<int> total_epochs;
  double duration_s = 0.0;
  double energy_kwh = 0.0;
  double emissions_g = 0.0;
  double km = 0.0;
  double intensity = 0.0;
  bool early_stop = false;
  bool has_summary = false;
};

SessionRow make_row(const SessionLog& log, const std::filesystem::path& path,
                    const ConversionFactors& factors) {
  SessionRow r;
  r.id = log.session_id;
  r.path = path.string();
  r.experiment = log.experiment;
  r.started_at = log.started_at;
  r.epochs = static_cast<int>(log.epochs.size());
  r.intensity = log.realized_intensity();
  r.early_stop = log.early_stop();
  r.has_summary = log.summary.has_value();
  if (log.summary) {
    r.epochs = log.summary->epochs_completed;
    r.total_epochs = log.summary->total_epochs;
    r.duration_s = log.summary->duration_s;
    r.energy_kwh = log.summary->energy_kwh;
    r.emissions_g = log.summary->emissions_g;
  } else {
    const auto t = recompute(log);
    r.duration_s = t.duration_s;
    r.energy_kwh = t.energy_kwh;
    r.emissions_g = t.emissions_g;
  }
  r.km = to_km_by_car(r.emissions_g, factors);
  return r;
}

json totals_json(const AggregateTotals& t) {
  return {{"sessions", t.sessions},       {"epochs", t.epochs},
          {"duration_s", t.duration_s},   {"energy_kwh", t.energy_kwh},
          {"emissions_g", t.emissions_g}, {"km_by_car", t.km_by_car}};
}

int cmd_report(const std::string& dir, const std::string& format, double car_g_per_km,
               std::ostream& out, std::ostream& err) {
  ConversionFactors factors{car_g_per_km};
  try {
    factors.validate();
  } catch (const std::exception& e) {
    err << "carbonwatch: " << e.what() << "\n";
    return kExitUsage;
  }
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    err << "carbonwatch: no such directory: " << dir << "\n";
    return kExitRuntime;
  }

  std::vector<SessionLog> logs;
  std::vector<SessionRow> rows;
  json errors = json::array();
  for (const auto& path : find_session_logs(dir)) {
    try {
      ParseOptions options;
      options.allow_truncated_tail = true;
      auto log = parse_log(path, options);
      rows.push_back(make_row(log, path, factors));
      logs.push_back(std::move(log));
    } catch (const std::exception& e) {
      err << "carbonwatch: WARNING: skipping " << path.string() << ": " << e.what() << "\n";
      errors.push_back({{"path", path.string()}, {"message", e.what()}});
    }
  }
  const auto totals = aggregate(logs, factors);

  if (format == "json") {
    json sessions = json::array();
    for (const auto& r : rows) {
      sessions.push_back({{"session_id", r.id},
                          {"path", r.path},
                          {"experiment", r.experiment},
                          {"started_at", r.started_at},
                          {"epochs", r.epochs},
                          {"total_epochs", r.total_epochs ? json(*r.total_epochs) : json(nullptr)},
                          {"duration_s", r.duration_s},
                          {"energy_kwh", r.energy_kwh},
                          {"emissions_g", r.emissions_g},
                          {"km_by_car", r.km},
                          {"intensity_g_per_kwh", r.intensity},
                          {"early_stop", r.early_stop},
                          {"complete", r.has_summary}});
    }
    json doc{{"version", kLogFormatVersion},
             {"sessions", sessions},
             {"total", totals_json(totals)},
             {"errors", errors}};
    out << doc.dump(2) << "\n";
    return kExitOk;
  }

  if (rows.empty()) {
    out << "no sessions found\n";
    return kExitOk;
  }
  char line[512];
  std::snprintf(line, sizeof(line), "%-24s %-14s %9s %10s %12s %12s %10s  %s\n", "session",
                "experiment", "epochs", "time", "energy_kwh", "co2eq_g", "km", "status");
  out << line;
  for (const auto& r : rows) {
    const std::string epochs =
        std::to_string(r.epochs) + "/" + (r.total_epochs ? std::to_string(*r.total_epochs) : "?");
    const char* status = !r.has_summary ? "incomplete" : (r.early_stop ? "early stop" : "complete");
    std::snprintf(line, sizeof(line), "%-24s %-14s %9s %10s %12.6f %12.3f %10.3f  %s\n",
                  r.id.c_str(), r.experiment.empty() ? "-" : r.experiment.c_str(),
                  epochs.c_str(), format_duration(r.duration_s).c_str(), r.energy_kwh,
                  r.emissions_g, r.km, status);
    out << line;
  }
  out << totals.sessions << " session(s), " << totals.epochs << " epoch(s), "
      << format_duration(totals.duration_s) << "\n";
  out << "Total: " << fmt("%.3f", totals.energy_kwh) << " kWh, "
      << fmt("%.3f", totals.emissions_g / 1000.0) << " kg CO2eq, " << fmt("%.3f", totals.km_by_car)
      << " km\n";
  return kExitOk;
}

// --- estimate -------------------------------------------------------------

int cmd_estimate(const EstimateInput& input, const std::string& format, std::ostream& out,
                 std::ostream& err) {
  EstimateResult r;
  try {
    r = estimate(input);
  } catch (const std::exception& e) {
    err << "carbonwatch: " << e.what() << "\n";
    return kExitUsage;
  }
  if (format == "json") {
    out << to_json(r).dump(2) << "\n";
    return kExitOk;
  }
  out << "Compute time:  " << fmt("%.2f", r.compute_seconds) << " s on one device ("
      << fmt("%.2f", r.device_days) << " device-days)\n";
  if (input.device_count > 1) {
    out << "Wall time:     " << fmt("%.2f", r.wall_seconds) << " s on " << input.device_count
        << " devices\n";
  }
  out << "Energy:        " << fmt("%.2f", r.energy_kwh) << " kWh\n";
  out << "CO2eq:         " << fmt("%.2f", r.emissions_g / 1000.0) << " kg\n";
  out << "This is equivalent to " << fmt("%.2f", r.km_by_car) << " km travelled by car\n";
  return kExitOk;
}

// --- intensity ------------------------------------------------------------

int cmd_intensity(const CommonFlags& f, bool watch, int count, std::ostream& out,
                  std::ostream& err) {
  TrackerConfig config;
  std::shared_ptr<HttpTransport> transport;
  try {
    config = build_config(f);
    transport = make_transport(config);
  } catch (const std::exception& e) {
    err << "carbonwatch: " << e.what() << "\n";
    return kExitUsage;
  }
  Diagnostics diagnostics;
  diagnostics.add_sink([&](Severity s, const std::string& message) {
    if (s == Severity::info && !config.verbose) return;
    err << "carbonwatch: " << (s == Severity::info ? "" : "WARNING: ") << message << "\n";
  });
  try {
    IntensityService service(config.intensity, transport, diagnostics);
    const auto location = service.resolve_location(config.region);
    const std::string where =
        location.known() ? (location.region_name.empty() && location.city.empty()
                                ? location.country_code
                                : location.display())
                         : "unknown location";
    const auto& d = service.default_data();
    for (int i = 0; watch ? (count <= 0 || i < count) : i < 1; ++i) {
      if (i > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(config.intensity.refresh_period_s));
      }
      const auto ci = service.fetch_current(location);
      const bool is_default = ci.source == IntensitySource::default_average;
      if (f.format == "json") {
        json j{{"time", format_iso8601(ci.fetched_at)},
               {"region", ci.region},
               {"g_per_kwh", ci.g_per_kwh},
               {"source", is_default ? "default" : to_string(ci.source)},
               {"location", to_json(location)}};
        if (is_default) {
          j["default"] = {{"region", d.region}, {"year", d.year}, {"dataset", d.dataset},
                          {"url", d.url}};
        }
        out << j.dump() << "\n" << std::flush;
      } else {
        out << format_iso8601(ci.fetched_at) << "  " << where << ": "
            << fmt("%.2f", ci.g_per_kwh) << " gCO2/kWh (source: ";
        if (is_default) {
          out << "default, " << d.region << " " << d.year << " average)";
        } else {
          out << to_string(ci.source) << ")";
        }
        out << "\n" << std::flush;
      }
    }
  } catch (const std::exception& e) {
    err << "carbonwatch: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Measure, predict and report the carbon footprint of compute jobs", "carbonwatch"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonFlags track_flags;
  auto* track = app.add_subcommand("track", "Run a command and track its footprint");
  add_session_flags(track, track_flags);
  track->prefix_command();
  track->allow_extras();

  std::string report_dir;
  std::string report_format = "text";
  double report_car = ConversionFactors{}.car_g_per_km;
  auto* report = app.add_subcommand("report", "Summarize session logs in a directory");
  report->add_option("logdir", report_dir, "Directory searched recursively for session logs");
  report->add_option("--format", report_format, "Output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
  report->add_option("--car-g-per-km", report_car, "Car emissions per km")->capture_default_str();
  std::string report_config;
  report->add_option("--config", report_config, "Config file supplying log_dir");

  EstimateInput est;
  est.pue = PueConfig{}.pue;
  est.intensity_g_per_kwh = DefaultIntensity::builtin().g_per_kwh;
  std::string est_format = "text";
  auto* est_cmd = app.add_subcommand("estimate", "Back-of-envelope footprint of a FLOP budget");
  est_cmd->add_option("--flops", est.flops_total, "Total floating-point operations")->required();
  est_cmd->add_option("--device-flops", est.device_flops, "Sustained FLOP/s per device")
      ->required();
  est_cmd->add_option("--tdp", est.tdp_w, "Rated power per device in watts")->required();
  est_cmd->add_option("--devices", est.device_count, "Number of devices")->capture_default_str();
  est_cmd->add_option("--pue", est.pue, "Power usage effectiveness")->capture_default_str();
  est_cmd->add_option("--intensity", est.intensity_g_per_kwh, "Carbon intensity in gCO2/kWh")
      ->capture_default_str();
  est_cmd->add_option("--car-g-per-km", est.car_g_per_km, "Car emissions per km")
      ->capture_default_str();
  est_cmd->add_option("--format", est_format, "Output format")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  CommonFlags intensity_flags;
  bool watch = false;
  int watch_count = 0;
  auto* intensity = app.add_subcommand("intensity", "Show the current carbon intensity");
  intensity->add_option("--config", intensity_flags.config_path, "Config file (JSON)");
  intensity->add_option("--region", intensity_flags.region, "Country code, e.g. DK or GB");
  intensity->add_option("--fixtures", intensity_flags.fixtures, "Serve requests from fixtures");
  intensity->add_flag("--no-net", intensity_flags.no_net, "Never use the network");
  intensity->add_flag("-v,--verbose", intensity_flags.verbose, "Print informational messages");
  intensity->add_flag("--watch", watch, "Repeat at the refresh period (900 s)");
  intensity->add_option("--count", watch_count, "Number of updates with --watch (0: forever)");
  add_format_flag(intensity, intensity_flags);

  std::vector<const char*> args(argv, argv + argc);
  std::vector<std::string> command;
  if (args.size() > 1 && std::string(args[1]) == "track") {
    auto sep = std::find_if(args.begin() + 2, args.end(),
                            [](const char* a) { return std::string(a) == "--"; });
    if (sep != args.end()) {
      for (auto it = sep + 1; it != args.end(); ++it) command.emplace_back(*it);
      args.erase(sep, args.end());
    }
  }

  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*track) {
    if (command.empty()) command = track->remaining();
    return cmd_track(track_flags, command, out, err);
  }
  if (*report) {
    if (report_dir.empty()) {
      try {
        CommonFlags f;
        f.config_path = report_config;
        const auto c = build_config(f);
        if (c.log_dir) report_dir = c.log_dir->string();
      } catch (const std::exception& e) {
        err << "carbonwatch: " << e.what() << "\n";
        return kExitUsage;
      }
    }
    if (report_dir.empty()) {
      err << "carbonwatch: report needs a log directory\n";
      return kExitUsage;
    }
    return cmd_report(report_dir, report_format, report_car, out, err);
  }
  if (*est_cmd) return cmd_estimate(est, est_format, out, err);
  if (*intensity) return cmd_intensity(intensity_flags, watch, watch_count, out, err);
  return kExitUsage;
}

}  // namespace carbonwatch
