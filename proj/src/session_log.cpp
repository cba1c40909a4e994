#include "carbonwatch/session_log.hpp"

#include <algorithm>
#include <sstream>

#include "carbonwatch/errors.hpp"

namespace carbonwatch {

using nlohmann::json;

namespace {

const char* to_string(GeoLocation::Source s) {
  switch (s) {
    case GeoLocation::Source::ip_lookup: return "ip_lookup";
    case GeoLocation::Source::override_region: return "override";
    case GeoLocation::Source::unknown: return "unknown";
  }
  return "unknown";
}

GeoLocation::Source parse_location_source(const std::string& s) {
  if (s == "ip_lookup") return GeoLocation::Source::ip_lookup;
  if (s == "override") return GeoLocation::Source::override_region;
  return GeoLocation::Source::unknown;
}

json header_json(const SessionLog& log) {
  json j;
  j["type"] = "header";
  j["version"] = log.version;
  j["session_id"] = log.session_id;
  j["started_at"] = log.started_at;
  j["experiment"] = log.experiment;
  j["pue"] = log.pue;
  j["devices"] = json::array();
  for (const auto& d : log.devices) j["devices"].push_back(to_json(d));
  j["config"] = log.config;
  return j;
}

json intensity_json(const IntensitySample& s) {
  return json{{"type", "intensity"},
              {"time", format_iso8601(s.time)},
              {"g_per_kwh", s.g_per_kwh},
              {"source", to_string(s.source)},
              {"region", s.region}};
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(std::string("missing field '") + key + "'");
  return j.at(key).get<T>();
}

EpochRecord epoch_from_json(const json& j) {
  EpochRecord e;
  e.index = field<int>(j, "index");
  e.start_s = field<double>(j, "start_s");
  e.end_s = field<double>(j, "end_s");
  e.duration_s = field<double>(j, "duration_s");
  e.avg_power_w = field<std::map<std::string, double>>(j, "avg_power_w");
  e.energy_j = field<std::map<std::string, double>>(j, "energy_j");
  if (j.contains("carried_forward")) {
    e.carried_forward = j.at("carried_forward").get<std::vector<std::string>>();
  }
  if (!(e.duration_s > 0.0)) throw Error("epoch duration must be positive");
  return e;
}

Prediction prediction_from_json(const json& j) {
  Prediction p;
  p.total_epochs = field<int>(j, "total_epochs");
  p.monitored_epochs = field<int>(j, "monitored_epochs");
  p.duration_s = field<double>(j, "duration_s");
  p.energy_kwh = field<double>(j, "energy_kwh");
  p.intensity_g_per_kwh = field<double>(j, "intensity_g_per_kwh");
  p.emissions_g = field<double>(j, "emissions_g");
  p.intensity_span_s = j.value("intensity_span_s", 0.0);
  p.intensity_source = parse_intensity_source(j.value("intensity_source", "default_average"))
                           .value_or(IntensitySource::default_average);
  return p;
}

SessionSummary summary_from_json(const json& j) {
  SessionSummary s;
  s.epochs_completed = field<int>(j, "epochs_completed");
  s.total_epochs = field<int>(j, "total_epochs");
  s.duration_s = field<double>(j, "duration_s");
  s.pue = field<double>(j, "pue");
  s.energy_kwh = field<double>(j, "energy_kwh");
  s.intensity_g_per_kwh = field<double>(j, "intensity_g_per_kwh");
  s.emissions_g = field<double>(j, "emissions_g");
  s.km_by_car = field<double>(j, "km_by_car");
  s.early_stop = field<bool>(j, "early_stop");
  return s;
}

}  // namespace

json to_json(const Device& d) {
  return json{{"id", d.id}, {"kind", to_string(d.kind)}, {"label", d.label}, {"backend", d.backend}};
}

json to_json(const EpochRecord& e) {
  return json{{"type", "epoch"},
              {"index", e.index},
              {"start_s", e.start_s},
              {"end_s", e.end_s},
              {"duration_s", e.duration_s},
              {"avg_power_w", e.avg_power_w},
              {"energy_j", e.energy_j},
              {"carried_forward", e.carried_forward}};
}

json to_json(const Prediction& p) {
  return json{{"type", "prediction"},
              {"total_epochs", p.total_epochs},
              {"monitored_epochs", p.monitored_epochs},
              {"duration_s", p.duration_s},
              {"energy_kwh", p.energy_kwh},
              {"intensity_g_per_kwh", p.intensity_g_per_kwh},
              {"emissions_g", p.emissions_g},
              {"intensity_source", to_string(p.intensity_source)},
              {"intensity_span_s", p.intensity_span_s}};
}

json to_json(const SessionSummary& s) {
  return json{{"type", "summary"},
              {"epochs_completed", s.epochs_completed},
              {"total_epochs", s.total_epochs},
              {"duration_s", s.duration_s},
              {"pue", s.pue},
              {"energy_kwh", s.energy_kwh},
              {"intensity_g_per_kwh", s.intensity_g_per_kwh},
              {"emissions_g", s.emissions_g},
              {"km_by_car", s.km_by_car},
              {"early_stop", s.early_stop}};
}

json to_json(const GeoLocation& l) {
  return json{{"type", "location"},
              {"country_code", l.country_code},
              {"region_name", l.region_name},
              {"city", l.city},
              {"resolved_from", to_string(l.resolved_from)}};
}

json to_json(const SessionLog& log) {
  json j = header_json(log);
  j.erase("type");
  if (log.location) j["location"] = to_json(*log.location);
  j["epochs"] = json::array();
  for (const auto& e : log.epochs) j["epochs"].push_back(to_json(e));
  j["intensity"] = json::array();
  for (const auto& s : log.intensity) j["intensity"].push_back(intensity_json(s));
  j["prediction"] = log.prediction ? to_json(*log.prediction) : json(nullptr);
  j["summary"] = log.summary ? to_json(*log.summary) : json(nullptr);
  j["early_stop"] = log.early_stop();
  return j;
}

double SessionLog::realized_intensity() const {
  if (summary) return summary->intensity_g_per_kwh;
  if (!intensity.empty()) {
    double sum = 0.0;
    for (const auto& s : intensity) sum += s.g_per_kwh;
    return sum / static_cast<double>(intensity.size());
  }
  return DefaultIntensity::builtin().g_per_kwh;
}

RecomputedTotals recompute(const SessionLog& log) {
  RecomputedTotals t;
  for (const auto& e : log.epochs) t.duration_s += e.duration_s;
  if (!log.epochs.empty()) t.energy_kwh = total_energy_kwh(log.epochs, PueConfig{log.pue});
  t.emissions_g = t.energy_kwh * log.realized_intensity();
  return t;
}

// --- writer ---------------------------------------------------------------

SessionLogWriter::SessionLogWriter(const std::filesystem::path& dir,
                                   const std::string& session_id) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  machine_path_ = dir / (session_id + "_carbon.jsonl");
  human_path_ = dir / (session_id + "_output.log");
  machine_.open(machine_path_, std::ios::out | std::ios::trunc);
  human_.open(human_path_, std::ios::out | std::ios::trunc);
  if (!machine_ || !human_) throw Error("cannot write session logs in " + dir.string());
}

void SessionLogWriter::line(const json& j) {
  std::lock_guard lock(mutex_);
  machine_ << j.dump() << '\n';
  machine_.flush();
}

void SessionLogWriter::header(const SessionLog& log) { line(header_json(log)); }
void SessionLogWriter::location(const GeoLocation& l) { line(to_json(l)); }
void SessionLogWriter::epoch(const EpochRecord& e) { line(to_json(e)); }
void SessionLogWriter::intensity(const IntensitySample& s) { line(intensity_json(s)); }
void SessionLogWriter::prediction(const Prediction& p) { line(to_json(p)); }
void SessionLogWriter::summary(const SessionSummary& s) { line(to_json(s)); }

void SessionLogWriter::human(std::string_view text) {
  std::lock_guard lock(mutex_);
  human_ << text;
  human_.flush();
}

LogPaths write_log(const SessionLog& log, const std::filesystem::path& dir,
                   const ConversionFactors& factors) {
  SessionLogWriter writer(dir, log.session_id);
  writer.header(log);
  if (log.location) writer.location(*log.location);
  for (const auto& s : log.intensity) writer.intensity(s);
  for (const auto& e : log.epochs) writer.epoch(e);
  if (log.prediction) writer.prediction(*log.prediction);
  if (log.summary) writer.summary(*log.summary);

  if (!log.epochs.empty()) {
    auto report = make_report(log.epochs, log.devices, PueConfig{log.pue},
                              log.realized_intensity(), factors,
                              log.location ? log.location->display() : "unknown");
    writer.human(render_report(report, ReportKind::actual) + "\n");
  }
  return {writer.machine_path(), writer.human_path()};
}

// --- parser ---------------------------------------------------------------

SessionLog parse_log(std::istream& in, const ParseOptions& options) {
  SessionLog log;
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<std::pair<std::size_t, std::string>> lines;
  while (std::getline(in, text)) lines.emplace_back(++line_no, text);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& [no, raw] = lines[i];
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::exception& e) {
      if (options.allow_truncated_tail && i + 1 == lines.size()) break;
      throw LogParseError(no, std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        throw Error("record has no type");
      }
      const auto type = j["type"].get<std::string>();
      if (!have_header) {
        if (type != "header") throw Error("first record must be the header");
        have_header = true;
        log.version = field<int>(j, "version");
        log.session_id = field<std::string>(j, "session_id");
        log.started_at = j.value("started_at", "");
        log.experiment = j.value("experiment", "");
        log.pue = field<double>(j, "pue");
        for (const auto& d : j.value("devices", json::array())) {
          Device dev;
          dev.id = field<std::string>(d, "id");
          dev.kind = parse_device_kind(field<std::string>(d, "kind")).value_or(DeviceKind::gpu);
          dev.label = d.value("label", dev.id);
          dev.backend = d.value("backend", "");
          log.devices.push_back(dev);
        }
        log.config = j.value("config", json::object());
      } else if (type == "location") {
        GeoLocation l;
        l.country_code = j.value("country_code", "unknown");
        l.region_name = j.value("region_name", "");
        l.city = j.value("city", "");
        l.resolved_from = parse_location_source(j.value("resolved_from", "unknown"));
        log.location = l;
      } else if (type == "epoch") {
        log.epochs.push_back(epoch_from_json(j));
      } else if (type == "intensity") {
        IntensitySample s;
        const auto t = parse_iso8601(field<std::string>(j, "time"));
        if (!t) throw Error("bad intensity timestamp");
        s.time = *t;
        s.g_per_kwh = field<double>(j, "g_per_kwh");
        s.source = parse_intensity_source(field<std::string>(j, "source"))
                       .value_or(IntensitySource::default_average);
        s.region = j.value("region", "");
        log.intensity.push_back(s);
      } else if (type == "prediction") {
        log.prediction = prediction_from_json(j);
      } else if (type == "summary") {
        log.summary = summary_from_json(j);
      } else if (type == "header") {
        throw Error("duplicate header");
      }
      // Unknown record types are skipped.
    } catch (const LogParseError&) {
      throw;
    } catch (const std::exception& e) {
      if (options.allow_truncated_tail && i + 1 == lines.size()) break;
      throw LogParseError(no, e.what());
    }
  }
  if (!have_header) throw LogParseError(std::max<std::size_t>(line_no, 1), "log has no header");
  return log;
}

SessionLog parse_log(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open session log " + path.string());
  return parse_log(in, options);
}

std::vector<std::filesystem::path> find_session_logs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return out;
  for (auto it = std::filesystem::recursive_directory_iterator(dir, ec);
       it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    const auto name = it->path().filename().string();
    const std::string suffix = "_carbon.jsonl";
    if (it->is_regular_file() && name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(it->path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

AggregateTotals aggregate(std::span<const SessionLog> logs, const ConversionFactors& factors) {
  AggregateTotals t;
  for (const auto& log : logs) {
    ++t.sessions;
    t.epochs += static_cast<int>(log.epochs.size());
    if (log.summary) {
      t.duration_s += log.summary->duration_s;
      t.energy_kwh += log.summary->energy_kwh;
      t.emissions_g += log.summary->emissions_g;
    } else {
      const auto r = recompute(log);
      t.duration_s += r.duration_s;
      t.energy_kwh += r.energy_kwh;
      t.emissions_g += r.emissions_g;
    }
  }
  t.km_by_car = to_km_by_car(t.emissions_g, factors);
  return t;
}

}  // namespace carbonwatch
