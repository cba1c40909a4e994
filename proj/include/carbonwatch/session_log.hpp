#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "carbonwatch/energy.hpp"
#include "carbonwatch/intensity.hpp"
#include "carbonwatch/predictor.hpp"
#include "carbonwatch/reporting.hpp"
#include "carbonwatch/sampling.hpp"

namespace carbonwatch {

inline constexpr int kLogFormatVersion = 1;

struct IntensitySample {
  WallTime time{};
  double g_per_kwh = 0.0;
  IntensitySource source = IntensitySource::default_average;
  std::string region;
};

struct SessionSummary {
  int epochs_completed = 0;
  int total_epochs = 0;
  double duration_s = 0.0;
  double pue = PueConfig::kGlobalAverage2018;
  double energy_kwh = 0.0;
  double intensity_g_per_kwh = 0.0;
  double emissions_g = 0.0;
  double km_by_car = 0.0;
  bool early_stop = false;
};

/// Everything recorded about one tracked run.
///
/// Machine log: one JSON object per line, each with a "type" field:
///   header     version, session_id, started_at, experiment, pue, devices, config
///   location   country_code, region_name, city, resolved_from
///   epoch      index, start_s, end_s, duration_s, avg_power_w{}, energy_j{},
///              carried_forward[]
///   intensity  time, g_per_kwh, source, region
///   prediction total_epochs, monitored_epochs, duration_s, energy_kwh,
///              intensity_g_per_kwh, emissions_g, intensity_source, intensity_span_s
///   summary    epochs_completed, total_epochs, duration_s, pue, energy_kwh,
///              intensity_g_per_kwh, emissions_g, km_by_car, early_stop
/// The header comes first; everything else may follow in any order.
struct SessionLog {
  int version = kLogFormatVersion;
  std::string session_id;
  std::string started_at;
  std::string experiment;
  double pue = PueConfig::kGlobalAverage2018;
  std::vector<Device> devices;
  nlohmann::json config = nlohmann::json::object();
  std::optional<GeoLocation> location;
  std::vector<EpochRecord> epochs;
  std::vector<IntensitySample> intensity;
  std::optional<Prediction> prediction;
  std::optional<SessionSummary> summary;

  /// A log without a summary line was cut short, so counts as stopped early.
  bool early_stop() const { return summary ? summary->early_stop : true; }
  /// Stored realized intensity, else the mean of the intensity samples, else
  /// the built-in default.
  double realized_intensity() const;
};

struct RecomputedTotals {
  double duration_s = 0.0;
  double energy_kwh = 0.0;
  double emissions_g = 0.0;
};

/// Totals rebuilt from the raw epoch records and PUE.
RecomputedTotals recompute(const SessionLog& log);

/// Incremental writer used during a live session. Each call appends one
/// complete line and flushes, so a crash leaves a log that parses up to the
/// last finished record. Thread-safe.
class SessionLogWriter {
 public:
  /// Creates `dir` if needed. Throws Error if the files cannot be opened.
  SessionLogWriter(const std::filesystem::path& dir, const std::string& session_id);

  void header(const SessionLog& log);
  void location(const GeoLocation& location);
  void epoch(const EpochRecord& epoch);
  void intensity(const IntensitySample& sample);
  void prediction(const Prediction& prediction);
  void summary(const SessionSummary& summary);
  /// Appends to the human-readable log.
  void human(std::string_view text);

  const std::filesystem::path& machine_path() const { return machine_path_; }
  const std::filesystem::path& human_path() const { return human_path_; }

 private:
  void line(const nlohmann::json& j);

  std::mutex mutex_;
  std::filesystem::path machine_path_;
  std::filesystem::path human_path_;
  std::ofstream machine_;
  std::ofstream human_;
};

struct LogPaths {
  std::filesystem::path machine;
  std::filesystem::path human;
};

/// Writes a complete session in one go: the machine log plus a human log
/// with the actual-consumption report.
LogPaths write_log(const SessionLog& log, const std::filesystem::path& dir,
                   const ConversionFactors& factors = {});

struct ParseOptions {
  /// Drop an unparseable final line (a crash mid-write) instead of failing.
  bool allow_truncated_tail = false;
};

/// Throws LogParseError naming the offending line.
SessionLog parse_log(std::istream& in, const ParseOptions& options = {});
SessionLog parse_log(const std::filesystem::path& path, const ParseOptions& options = {});

/// All machine logs (`*_carbon.jsonl`) under `dir`, recursively, sorted.
std::vector<std::filesystem::path> find_session_logs(const std::filesystem::path& dir);

struct AggregateTotals {
  std::size_t sessions = 0;
  int epochs = 0;
  double duration_s = 0.0;
  double energy_kwh = 0.0;
  double emissions_g = 0.0;
  double km_by_car = 0.0;
};

/// Sums energy and emissions over sessions; each session's emissions use its
/// own realized intensity. An empty list yields zeros.
AggregateTotals aggregate(std::span<const SessionLog> logs, const ConversionFactors& factors = {});

// JSON encoders shared by the log, the CLI and the C interface.
nlohmann::json to_json(const Device& device);
nlohmann::json to_json(const EpochRecord& epoch);
nlohmann::json to_json(const Prediction& prediction);
nlohmann::json to_json(const SessionSummary& summary);
nlohmann::json to_json(const GeoLocation& location);
nlohmann::json to_json(const SessionLog& log);

}  // namespace carbonwatch
