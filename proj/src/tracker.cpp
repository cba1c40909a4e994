#include "carbonwatch/tracker.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "carbonwatch/energy.hpp"
#include "carbonwatch/errors.hpp"
#include "carbonwatch/reporting.hpp"
#include "carbonwatch/timeutil.hpp"

namespace carbonwatch {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::created: return "created";
    case Phase::in_epoch: return "in_epoch";
    case Phase::between_epochs: return "between_epochs";
    case Phase::stopped: return "stopped";
  }
  return "unknown";
}

namespace {

std::atomic<int> g_pending_signal{0};
std::mutex g_signal_mutex;
int g_signal_users = 0;
struct sigaction g_old_int;
struct sigaction g_old_term;

extern "C" void on_termination_signal(int sig) { g_pending_signal.store(sig); }

void install_signal_handlers() {
  std::lock_guard lock(g_signal_mutex);
  if (g_signal_users++ > 0) return;
  g_pending_signal.store(0);
  struct sigaction sa {};
  sa.sa_handler = on_termination_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, &g_old_int);
  sigaction(SIGTERM, &sa, &g_old_term);
}

void restore_signal_handlers() {
  std::lock_guard lock(g_signal_mutex);
  if (g_signal_users == 0 || --g_signal_users > 0) return;
  sigaction(SIGINT, &g_old_int, nullptr);
  sigaction(SIGTERM, &g_old_term, nullptr);
}

std::string make_session_id(WallTime now) {
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
  std::random_device rd;
  char suffix[16];
  std::snprintf(suffix, sizeof(suffix), "%06x", rd() & 0xffffffu);
  return std::string(stamp) + "_" + suffix;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string components_banner(const std::vector<Device>& devices) {
  std::string text = "The following components were found:";
  for (DeviceKind kind : {DeviceKind::gpu, DeviceKind::cpu_package, DeviceKind::dram}) {
    std::vector<std::string> labels;
    for (const auto& d : devices) {
      if (d.kind == kind) labels.push_back(d.label.empty() ? d.id : d.label);
    }
    if (labels.empty()) continue;
    text += std::string(" ") + component_label(kind) + " with device(s) ";
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i) text += ", ";
      text += labels[i];
    }
    text += ".";
  }
  return text;
}

struct WorkerExit {
  Clock& clock;
  ~WorkerExit() { clock.worker_exited(); }
};

}  // namespace

Tracker::Tracker(TrackerConfig config, TrackerDeps deps)
    : config_(std::move(config)),
      out_(deps.out ? deps.out : &std::cout),
      err_(deps.err ? deps.err : &std::cerr) {
  if (deps.respect_disable_env && tracking_disabled_by_env()) {
    disabled_ = true;
    reporting_enabled_ = false;
    phase_ = Phase::stopped;
    return;
  }
  config_.validate();

  diagnostics_.add_sink([this](Severity severity, const std::string& message) {
    if (severity == Severity::info && !config_.verbose) return;
    std::string line = config_.output_prefix + ": ";
    if (severity != Severity::info) line += std::string(severity == Severity::warning ? "WARNING" : "ERROR") + ": ";
    line += message + "\n";
    std::lock_guard lock(out_mutex_);
    *err_ << line << std::flush;
    if (writer_) writer_->human(line);
  });

  clock_ = deps.clock ? deps.clock : std::make_shared<SteadyClock>();

  auto backends = std::move(deps.backends);
  if (backends.empty()) {
    try {
      backends = make_backends(config_.sampler);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cannot set up power sampling: ") + e.what());
    }
  }
  sampler_ = std::make_unique<Sampler>(std::move(backends), diagnostics_);
  devices_ = sampler_->devices();

  std::shared_ptr<HttpTransport> transport = deps.transport;
  if (!transport) {
    if (config_.fixtures_dir) {
      try {
        transport = FixtureTransport::from_directory(*config_.fixtures_dir);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot load HTTP fixtures: ") + e.what());
      }
    } else if (config_.no_net) {
      transport = std::make_shared<OfflineTransport>();
    } else {
      transport = std::make_shared<NetworkTransport>();
    }
  }
  try {
    service_ = std::make_unique<IntensityService>(config_.intensity, transport, diagnostics_,
                                                  deps.wall_clock);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot set up carbon intensity: ") + e.what());
  }
  for (auto& [code, provider] : deps.providers) service_->registry().add(code, provider);

  const WallTime started = service_->now();
  session_id_ = make_session_id(started);

  if (devices_.empty()) {
    reporting_enabled_ = false;
    diagnostics_.warn("no measurable devices found; energy will not be reported for this session");
    return;
  }

  if (config_.log_dir) {
    auto dir = *config_.log_dir;
    if (!config_.experiment.empty()) dir /= config_.experiment;
    try {
      auto writer = std::make_unique<SessionLogWriter>(dir, session_id_);
      SessionLog header;
      header.session_id = session_id_;
      header.started_at = format_iso8601(started);
      header.experiment = config_.experiment;
      header.pue = config_.pue.pue;
      header.devices = devices_;
      header.config = to_json(config_);
      writer->header(header);
      std::lock_guard lock(out_mutex_);
      writer_ = std::move(writer);
    } catch (const std::exception& e) {
      diagnostics_.warn(std::string("cannot write logs, reporting to standard output only: ") +
                        e.what());
    }
  }

  emit(components_banner(devices_));

  sampler_->start(clock_->now());
  if (config_.handle_signals) {
    install_signal_handlers();
    signals_installed_ = true;
  }
  clock_->worker_spawned();
  collector_ = std::thread([this] { collector_loop(); });
  clock_->worker_spawned();
  intensity_worker_ = std::thread([this] { intensity_loop(); });
}

Tracker::~Tracker() {
  stop();
  stop_workers();
}

void Tracker::emit(const std::string& text) {
  const std::string line = config_.output_prefix + ": " + text + "\n";
  std::lock_guard lock(out_mutex_);
  *out_ << line << std::flush;
  if (writer_) writer_->human(line);
}

void Tracker::emit_block(const std::string& block) {
  emit("\n" + block);
}

void Tracker::collector_loop() {
  WorkerExit exit{*clock_};
  const double interval = config_.sampler.interval_s;
  double next = clock_->now();
  while (!stop_collector_.load()) {
    const double now = clock_->now();
    if (now >= next) {
      auto samples = sampler_->sample_all(now);
      {
        std::lock_guard lock(buffer_mutex_);
        for (auto& s : samples) buffer_[s.device_id].push_back(std::move(s));
      }
      next += interval;
      if (next <= now) next = now + interval;
    }
    if (signals_installed_) {
      if (const int sig = g_pending_signal.load()) {
        emergency_stop(sig);
        return;
      }
    }
    double deadline = next;
    if (signals_installed_) deadline = std::min(next, clock_->now() + 0.25);
    clock_->wait_until(deadline, [this] { return stop_collector_.load(); });
  }
}

void Tracker::record_intensity(const CarbonIntensity& ci) {
  IntensitySample sample{ci.fetched_at, ci.g_per_kwh, ci.source, ci.region};
  bool first = false;
  {
    std::lock_guard lock(intensity_mutex_);
    first = intensity_.empty();
    intensity_.push_back(sample);
    latest_ = ci;
  }
  if (writer_) writer_->intensity(sample);
  if (first && ci.source == IntensitySource::default_average) {
    const auto& d = service_->default_data();
    diagnostics_.warn("live carbon intensity is unavailable for this location; using the " +
                      d.region + " " + std::to_string(d.year) + " average of " +
                      fixed2(d.g_per_kwh) + " gCO2/kWh");
  }
}

void Tracker::intensity_loop() {
  WorkerExit exit{*clock_};
  GeoLocation location;
  try {
    location = service_->resolve_location(config_.region);
  } catch (const std::exception& e) {
    diagnostics_.warn(std::string("location lookup failed: ") + e.what());
  }
  {
    std::lock_guard lock(intensity_mutex_);
    location_ = location;
  }
  try {
    if (writer_) writer_->location(location);
  } catch (const std::exception& e) {
    diagnostics_.warn(std::string("cannot write log: ") + e.what());
  }

  const double period = config_.intensity.refresh_period_s;
  double next = clock_->now();
  auto take_request = [this]() -> std::optional<PredictionRequest> {
    if (!prediction_requested_.exchange(false)) return std::nullopt;
    std::lock_guard lock(intensity_mutex_);
    auto request = std::move(pending_);
    pending_.reset();
    return request;
  };
  while (true) {
    const double now = clock_->now();
    if (now >= next) {
      try {
        record_intensity(service_->fetch_current(location));
      } catch (const std::exception& e) {
        diagnostics_.warn(std::string("carbon intensity update failed: ") + e.what());
      } catch (...) {
        diagnostics_.warn("carbon intensity update failed");
      }
      next += period;
      if (next <= now) next = now + period;
    }
    if (auto request = take_request()) handle_prediction(*request);
    if (stop_intensity_.load()) {
      if (auto request = take_request()) handle_prediction(*request);
      break;
    }
    clock_->wait_until(next, [this] {
      return stop_intensity_.load() || prediction_requested_.load();
    });
  }
}

void Tracker::handle_prediction(const PredictionRequest& request) {
  try {
    GeoLocation location;
    std::optional<CarbonIntensity> current;
    {
      std::lock_guard lock(intensity_mutex_);
      if (location_) location = *location_;
      current = latest_;
    }
    if (!current) current = service_->default_intensity(location);

    const auto draft = predict(request.epochs, request.total_epochs, config_.pue,
                               IntensityForecast{}, service_->now(), config_.predictor, current);
    IntensityForecast forecast;
    if (draft.intensity_span_s > 0.0) {
      forecast = service_->fetch_forecast(location, draft.intensity_span_s);
    }
    const auto p = predict(request.epochs, request.total_epochs, config_.pue, forecast,
                           service_->now(), config_.predictor, current);
    {
      std::lock_guard lock(intensity_mutex_);
      prediction_ = p;
    }
    if (writer_) writer_->prediction(p);

    FootprintReport report;
    report.epochs = p.total_epochs;
    report.duration_s = p.duration_s;
    report.energy_kwh = p.energy_kwh;
    report.emissions_g = p.emissions_g;
    report.km_by_car = to_km_by_car(p.emissions_g, config_.conversion);
    report.intensity_g_per_kwh = p.intensity_g_per_kwh;

    emit("Carbon intensity for the next " + format_duration(p.intensity_span_s) +
         " is predicted to be " + fixed2(p.intensity_g_per_kwh) +
         " gCO2/kWh at detected location: " + location_text() + ".");
    emit_block(render_report(report, ReportKind::predicted));

    if (config_.emissions_budget_g && p.emissions_g > *config_.emissions_budget_g) {
      diagnostics_.warn("predicted emissions of " + fixed2(p.emissions_g) +
                        " g exceed the budget of " + fixed2(*config_.emissions_budget_g) +
                        " g; consider stopping the run");
    }
  } catch (const std::exception& e) {
    diagnostics_.warn(std::string("prediction failed: ") + e.what());
  } catch (...) {
    diagnostics_.warn("prediction failed");
  }
}

std::string Tracker::location_text() const {
  std::lock_guard lock(intensity_mutex_);
  if (!location_ || !location_->known()) return "unknown";
  return location_->display();
}

double Tracker::realized_intensity() const {
  std::lock_guard lock(intensity_mutex_);
  if (intensity_.empty()) return service_->default_data().g_per_kwh;
  double sum = 0.0;
  for (const auto& s : intensity_) sum += s.g_per_kwh;
  return sum / static_cast<double>(intensity_.size());
}

void Tracker::epoch_start() noexcept {
  try {
    if (disabled_) return;
    std::lock_guard lock(state_mutex_);
    if (finishing_ || phase_ == Phase::stopped) return;
    if (phase_ == Phase::in_epoch) {
      diagnostics_.warn("epoch_start called twice without epoch_end; ignored");
      return;
    }
    epoch_start_s_ = clock_->now();
    if (reporting_enabled_) {
      std::lock_guard buffer_lock(buffer_mutex_);
      for (auto& [id, list] : buffer_) {
        std::erase_if(list, [&](const PowerSample& s) { return s.timestamp < epoch_start_s_; });
      }
    }
    phase_ = Phase::in_epoch;
  } catch (...) {
  }
}

void Tracker::epoch_end() noexcept {
  try {
    if (disabled_) return;
    bool finish_now = false;
    {
      std::lock_guard lock(state_mutex_);
      if (finishing_ || phase_ == Phase::stopped) return;
      if (phase_ != Phase::in_epoch) {
        diagnostics_.warn("epoch_end called without a matching epoch_start; ignored");
        return;
      }
      const double start = epoch_start_s_;
      const double end = clock_->now();
      const int index = completed_;
      phase_ = Phase::between_epochs;
      ++completed_;

      if (reporting_enabled_) {
        if (!(end > start)) {
          diagnostics_.warn("epoch " + std::to_string(index) + " has zero duration; not recorded");
        } else {
          DeviceSamples samples;
          const auto active = sampler_->active_devices();
          for (const auto& d : active) samples[d.id];
          {
            std::lock_guard buffer_lock(buffer_mutex_);
            for (auto& [id, list] : buffer_) {
              auto target = samples.find(id);
              std::vector<PowerSample> keep;
              for (auto& s : list) {
                if (s.timestamp >= end) {
                  keep.push_back(s);
                } else if (s.timestamp >= start && target != samples.end()) {
                  target->second.push_back(s);
                }
              }
              list = std::move(keep);
            }
          }
          for (const auto& d : active) {
            auto& list = samples[d.id];
            const bool has_value = std::any_of(list.begin(), list.end(),
                                               [](const PowerSample& s) { return s.defined; });
            if (has_value) continue;
            std::optional<PowerSample> at_end;
            {
              std::lock_guard buffer_lock(buffer_mutex_);
              for (const auto& s : buffer_[d.id]) {
                if (s.timestamp == end) at_end = s;
              }
            }
            try {
              list.push_back(at_end ? *at_end : sampler_->sample(d, end));
            } catch (const std::exception&) {
            }
          }
          try {
            auto record = close_epoch(index, samples, start, end,
                                      epochs_.empty() ? nullptr : &epochs_.back(), &diagnostics_);
            epochs_.push_back(record);
            if (writer_) writer_->epoch(record);
          } catch (const NoMeasurements&) {
            diagnostics_.warn("epoch " + std::to_string(index) +
                              " produced no measurements; not recorded");
          }
        }
        if (!config_.open_ended && completed_ == config_.epochs_before_pred &&
            config_.epochs_before_pred < config_.total_epochs && !epochs_.empty()) {
          {
            std::lock_guard intensity_lock(intensity_mutex_);
            pending_ = PredictionRequest{epochs_, config_.total_epochs};
          }
          prediction_requested_.store(true);
          clock_->notify();
        }
      }
      if (!config_.open_ended && completed_ >= config_.effective_monitor_epochs()) {
        finishing_ = true;
        finish_now = true;
      }
    }
    if (finish_now) finish(false);
  } catch (const std::exception& e) {
    diagnostics_.error(std::string("epoch_end failed: ") + e.what());
  } catch (...) {
  }
}

void Tracker::stop() noexcept {
  try {
    if (disabled_) return;
    {
      std::lock_guard lock(state_mutex_);
      if (finishing_ || phase_ == Phase::stopped) return;
      if (phase_ == Phase::in_epoch) {
        diagnostics_.warn("stopped during epoch " + std::to_string(completed_) +
                          "; the partial epoch is discarded");
      }
      finishing_ = true;
    }
    finish(false);
  } catch (...) {
  }
}

void Tracker::stop_workers() {
  if (workers_joined_.exchange(true)) return;
  stop_collector_.store(true);
  stop_intensity_.store(true);
  if (clock_) clock_->notify();
  if (collector_.joinable()) collector_.join();
  if (intensity_worker_.joinable()) intensity_worker_.join();
}

SessionSummary Tracker::build_summary(bool early_stop) const {
  SessionSummary s;
  s.epochs_completed = completed_;
  s.total_epochs = config_.open_ended ? completed_ : config_.total_epochs;
  s.pue = config_.pue.pue;
  s.early_stop = early_stop;
  for (const auto& e : epochs_) s.duration_s += e.duration_s;
  s.energy_kwh = epochs_.empty() ? 0.0 : total_energy_kwh(epochs_, config_.pue);
  s.intensity_g_per_kwh = realized_intensity();
  s.emissions_g = s.energy_kwh * s.intensity_g_per_kwh;
  s.km_by_car = s.emissions_g / config_.conversion.car_g_per_km;
  return s;
}

void Tracker::finish(bool interrupted) {
  if (!interrupted) stop_workers();

  SessionSummary summary;
  std::vector<EpochRecord> epochs;
  {
    std::lock_guard lock(state_mutex_);
    const bool early = interrupted ||
                       (!config_.open_ended && completed_ < config_.effective_monitor_epochs());
    summary = build_summary(early);
    epochs = epochs_;
  }

  if (reporting_enabled_) {
    if (epochs.empty()) {
      diagnostics_.warn("no epochs were measured; there is nothing to report");
    } else {
      try {
        const auto report = make_report(epochs, devices_, config_.pue,
                                        summary.intensity_g_per_kwh, config_.conversion,
                                        location_text());
        emit("Average carbon intensity during training was " +
             fixed2(summary.intensity_g_per_kwh) +
             " gCO2/kWh at detected location: " + location_text() + ".");
        emit_block(render_report(report, ReportKind::actual));
        if (config_.verbose) emit_block(render_breakdown(report));
      } catch (const std::exception& e) {
        diagnostics_.warn(std::string("cannot produce the report: ") + e.what());
      }
    }
    try {
      if (writer_) writer_->summary(summary);
    } catch (const std::exception& e) {
      diagnostics_.warn(std::string("cannot write log summary: ") + e.what());
    }
    emit("Finished monitoring.");
  }

  {
    std::lock_guard lock(state_mutex_);
    summary_ = summary;
    phase_ = Phase::stopped;
  }
  if (signals_installed_.exchange(false)) restore_signal_handlers();
}

void Tracker::emergency_stop(int sig) {
  stop_intensity_.store(true);
  clock_->notify();
  {
    std::lock_guard lock(state_mutex_);
    if (finishing_ || phase_ == Phase::stopped) return;
    finishing_ = true;
  }
  diagnostics_.warn("interrupted by signal " + std::to_string(sig) +
                    "; writing the partial session");
  finish(true);
  std::raise(sig);
}

Phase Tracker::phase() const {
  std::lock_guard lock(state_mutex_);
  return phase_;
}

int Tracker::epochs_completed() const {
  std::lock_guard lock(state_mutex_);
  return completed_;
}

std::vector<EpochRecord> Tracker::epochs() const {
  std::lock_guard lock(state_mutex_);
  return epochs_;
}

std::optional<Prediction> Tracker::prediction() const {
  std::lock_guard lock(intensity_mutex_);
  return prediction_;
}

std::optional<SessionSummary> Tracker::summary() const {
  std::lock_guard lock(state_mutex_);
  return summary_;
}

std::optional<GeoLocation> Tracker::location() const {
  std::lock_guard lock(intensity_mutex_);
  return location_;
}

std::vector<IntensitySample> Tracker::intensity_samples() const {
  std::lock_guard lock(intensity_mutex_);
  return intensity_;
}

std::optional<std::filesystem::path> Tracker::machine_log_path() const {
  if (!writer_) return std::nullopt;
  return writer_->machine_path();
}

std::optional<std::filesystem::path> Tracker::human_log_path() const {
  if (!writer_) return std::nullopt;
  return writer_->human_path();
}

}  // namespace carbonwatch
