#pragma once

#include <atomic>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "carbonwatch/clock.hpp"
#include "carbonwatch/config.hpp"
#include "carbonwatch/diagnostics.hpp"
#include "carbonwatch/http.hpp"
#include "carbonwatch/intensity.hpp"
#include "carbonwatch/predictor.hpp"
#include "carbonwatch/sampling.hpp"
#include "carbonwatch/session_log.hpp"

namespace carbonwatch {

enum class Phase { created, in_epoch, between_epochs, stopped };

const char* to_string(Phase phase);

/// Collaborators a tracker can be given instead of the real ones.
struct TrackerDeps {
  std::shared_ptr<Clock> clock;
  /// Used for all intensity requests. Defaults to fixtures, offline or
  /// network transport depending on the config.
  std::shared_ptr<HttpTransport> transport;
  IntensityService::WallClock wall_clock;
  /// Replace the backends built from config.sampler when non-empty.
  std::vector<std::unique_ptr<Backend>> backends;
  /// Extra or replacement providers keyed by country code.
  std::vector<std::pair<std::string, std::shared_ptr<IntensityProvider>>> providers;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
  /// Honour CARBONWATCH_DISABLE.
  bool respect_disable_env = true;
};

/// One tracked training run.
///
///     Tracker tracker(config);
///     for (int e = 0; e < epochs; ++e) {
///       tracker.epoch_start();
///       train_one_epoch();
///       tracker.epoch_end();
///     }
///     tracker.stop();
///
/// The constructor throws ConfigError on an invalid config. After that, no
/// lifecycle call throws: out-of-order calls and worker failures become
/// warnings. Use the handle from one thread at a time.
class Tracker {
 public:
  explicit Tracker(TrackerConfig config, TrackerDeps deps = {});
  ~Tracker();

  Tracker(const Tracker&) = delete;
  Tracker& operator=(const Tracker&) = delete;

  void epoch_start() noexcept;
  void epoch_end() noexcept;
  /// Joins the workers, emits the actual report and closes the logs.
  /// Idempotent.
  void stop() noexcept;

  Phase phase() const;
  /// No-op session, because of CARBONWATCH_DISABLE.
  bool disabled() const { return disabled_; }
  /// False when no device could be measured.
  bool reporting_enabled() const { return reporting_enabled_; }
  int epochs_completed() const;
  std::vector<EpochRecord> epochs() const;
  std::vector<Device> devices() const { return devices_; }
  std::optional<Prediction> prediction() const;
  std::optional<SessionSummary> summary() const;
  std::optional<GeoLocation> location() const;
  std::vector<IntensitySample> intensity_samples() const;
  const std::string& session_id() const { return session_id_; }
  std::optional<std::filesystem::path> machine_log_path() const;
  std::optional<std::filesystem::path> human_log_path() const;
  Diagnostics& diagnostics() { return diagnostics_; }
  const TrackerConfig& config() const { return config_; }

 private:
  struct PredictionRequest {
    std::vector<EpochRecord> epochs;
    int total_epochs = 0;
  };

  void collector_loop();
  void intensity_loop();
  void handle_prediction(const PredictionRequest& request);
  void record_intensity(const CarbonIntensity& ci);
  void finish(bool interrupted);
  void stop_workers();
  SessionSummary build_summary(bool early_stop) const;
  double realized_intensity() const;
  std::string location_text() const;
  void emit(const std::string& text);
  void emit_block(const std::string& block);
  void emergency_stop(int signal);

  TrackerConfig config_;
  std::ostream* out_;
  std::ostream* err_;
  Diagnostics diagnostics_;
  std::shared_ptr<Clock> clock_;
  std::unique_ptr<Sampler> sampler_;
  std::unique_ptr<IntensityService> service_;
  std::unique_ptr<SessionLogWriter> writer_;
  std::vector<Device> devices_;
  std::string session_id_;
  bool disabled_ = false;
  bool reporting_enabled_ = true;
  std::atomic<bool> signals_installed_{false};

  mutable std::mutex out_mutex_;

  // Host-side state.
  mutable std::mutex state_mutex_;
  Phase phase_ = Phase::created;
  bool finishing_ = false;
  double epoch_start_s_ = 0.0;
  int completed_ = 0;
  std::vector<EpochRecord> epochs_;
  std::optional<SessionSummary> summary_;

  std::mutex buffer_mutex_;
  DeviceSamples buffer_;

  // Published by the intensity worker.
  mutable std::mutex intensity_mutex_;
  std::optional<GeoLocation> location_;
  std::vector<IntensitySample> intensity_;
  std::optional<CarbonIntensity> latest_;
  std::optional<Prediction> prediction_;
  std::optional<PredictionRequest> pending_;

  std::atomic<bool> stop_collector_{false};
  std::atomic<bool> stop_intensity_{false};
  std::atomic<bool> prediction_requested_{false};
  std::atomic<bool> workers_joined_{false};
  std::thread collector_;
  std::thread intensity_worker_;
};

}  // namespace carbonwatch
