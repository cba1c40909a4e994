#include "carbonwatch/intensity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carbonwatch/errors.hpp"
#include "default_intensity_data.hpp"

namespace carbonwatch {

using nlohmann::json;

const char* to_string(IntensitySource source) {
  switch (source) {
    case IntensitySource::realtime: return "realtime";
    case IntensitySource::forecast: return "forecast";
    case IntensitySource::default_average: return "default_average";
  }
  return "unknown";
}

std::optional<IntensitySource> parse_intensity_source(std::string_view text) {
  if (text == "realtime") return IntensitySource::realtime;
  if (text == "forecast") return IntensitySource::forecast;
  if (text == "default_average") return IntensitySource::default_average;
  return std::nullopt;
}

void IntensityForecast::validate() const {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (!(w.end > w.start)) throw InvalidArgument("forecast window has non-positive length");
    if (!std::isfinite(w.g_per_kwh) || w.g_per_kwh <= 0.0) {
      throw InvalidArgument("forecast window value must be positive");
    }
    if (i > 0 && w.start < windows[i - 1].end) {
      throw InvalidArgument("forecast windows overlap or are out of order");
    }
  }
}

double value_at(const IntensityForecast& forecast, WallTime t) {
  if (forecast.windows.empty()) throw InvalidArgument("forecast has no windows");
  const auto& ws = forecast.windows;
  if (t < ws.front().start) return ws.front().g_per_kwh;
  for (const auto& w : ws) {
    if (t >= w.start && t < w.end) return w.g_per_kwh;
  }
  // In a gap or past the end: nearest earlier window.
  const ForecastWindow* best = &ws.front();
  for (const auto& w : ws) {
    if (w.start <= t) best = &w;
  }
  return best->g_per_kwh;
}

double average_over(const IntensityForecast& forecast, WallTime start, WallTime end,
                    Diagnostics* diagnostics) {
  if (!(end > start)) throw InvalidArgument("average_over needs end > start");
  if (forecast.windows.empty()) throw InvalidArgument("forecast has no windows");
  const WallTime cover_start = forecast.windows.front().start;
  const WallTime cover_end = forecast.windows.back().end;
  if (start < cover_start || end > cover_end) {
    if (diagnostics) diagnostics->warn("intensity span exceeds forecast coverage; clamping");
    start = std::clamp(start, cover_start, cover_end);
    end = std::clamp(end, cover_start, cover_end);
  }
  if (!(end > start)) return value_at(forecast, start);

  double weighted = 0.0;
  double covered = 0.0;
  int overlapping = 0;
  double only_value = 0.0;
  for (const auto& w : forecast.windows) {
    const auto lo = std::max(w.start, start);
    const auto hi = std::min(w.end, end);
    if (hi <= lo) continue;
    const double span = seconds_between(lo, hi);
    weighted += w.g_per_kwh * span;
    covered += span;
    ++overlapping;
    only_value = w.g_per_kwh;
  }
  if (covered <= 0.0) return value_at(forecast, start);
  if (overlapping == 1) return only_value;
  return weighted / covered;
}

std::string GeoLocation::display() const {
  std::string out;
  for (const auto* part : {&city, &region_name, &country_code}) {
    if (part->empty()) continue;
    if (!out.empty()) out += ", ";
    out += *part;
  }
  return out.empty() ? "unknown" : out;
}

DefaultIntensity DefaultIntensity::parse(std::string_view json_text) {
  try {
    const auto j = json::parse(json_text);
    DefaultIntensity d;
    d.g_per_kwh = j.at("g_per_kwh").get<double>();
    d.region = j.at("region").get<std::string>();
    d.year = j.value("year", 0);
    d.dataset = j.value("dataset", "");
    d.url = j.value("url", "");
    if (!std::isfinite(d.g_per_kwh) || d.g_per_kwh <= 0.0) {
      throw ConfigError("default intensity must be positive");
    }
    return d;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid default intensity data: ") + e.what());
  }
}

DefaultIntensity DefaultIntensity::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open default intensity file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

const DefaultIntensity& DefaultIntensity::builtin() {
  static const DefaultIntensity value = parse(detail::kDefaultIntensityJson);
  return value;
}

// --- providers ------------------------------------------------------------

namespace {

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == ':') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string dk_time(WallTime t) {
  // Energi Data Service takes minute-resolution timestamps without a zone
  // suffix; timezone=UTC is passed explicitly.
  auto s = format_iso8601_minutes(t);
  s.pop_back();
  return s;
}

WallTime parse_time_or_throw(const std::string& text) {
  auto t = parse_iso8601(text);
  if (!t) throw ProviderError("unparseable timestamp '" + text + "'");
  return *t;
}

/// Turns point-in-time records into back-to-back windows. The last window
/// gets the typical record spacing.
std::vector<ForecastWindow> to_windows(const std::vector<std::pair<WallTime, double>>& points,
                                       double default_step_s) {
  std::vector<ForecastWindow> out;
  double step = default_step_s;
  if (points.size() >= 2) {
    std::vector<double> gaps;
    for (std::size_t i = 1; i < points.size(); ++i) {
      gaps.push_back(seconds_between(points[i - 1].first, points[i].first));
    }
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(gaps.size() / 2), gaps.end());
    step = gaps[gaps.size() / 2];
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    ForecastWindow w;
    w.start = points[i].first;
    w.end = i + 1 < points.size() ? points[i + 1].first : add_seconds(w.start, step);
    w.g_per_kwh = points[i].second;
    out.push_back(w);
  }
  return out;
}

}  // namespace

DkProvider::DkProvider(std::shared_ptr<HttpTransport> transport, std::string base_url,
                       HttpOptions http)
    : transport_(std::move(transport)), base_(std::move(base_url)), http_(http) {}

std::vector<std::pair<WallTime, double>> DkProvider::parse_records(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderError(std::string("invalid JSON from energy data service: ") + e.what());
  }
  if (!j.contains("records") || !j["records"].is_array()) {
    throw ProviderError("energy data service response lacks a records array");
  }
  std::map<WallTime, std::pair<double, int>> by_time;
  for (const auto& rec : j["records"]) {
    if (!rec.contains("Minutes5UTC") || !rec.contains("CO2Emission")) continue;
    if (!rec["CO2Emission"].is_number()) continue;
    const auto t = parse_time_or_throw(rec["Minutes5UTC"].get<std::string>());
    auto& acc = by_time[t];
    acc.first += rec["CO2Emission"].get<double>();
    acc.second += 1;
  }
  std::vector<std::pair<WallTime, double>> out;
  for (const auto& [t, acc] : by_time) out.emplace_back(t, acc.first / acc.second);
  return out;
}

CarbonIntensity DkProvider::current(const GeoLocation& location, WallTime now) {
  const auto url = base_ + "/dataset/CO2Emis?start=" + dk_time(add_seconds(now, -3600)) +
                   "&end=" + dk_time(add_seconds(now, 60)) + "&timezone=UTC&sort=" +
                   url_encode("Minutes5UTC DESC");
  const auto points = parse_records(get_with_retries(*transport_, url, http_).body);
  if (points.empty()) throw ProviderError("energy data service returned no records");
  const double value = points.back().second;
  if (!(value > 0.0)) throw ProviderError("non-positive intensity from energy data service");
  return CarbonIntensity{value, location.country_code, now, IntensitySource::realtime};
}

std::optional<IntensityForecast> DkProvider::forecast(const GeoLocation&, WallTime now,
                                                      double horizon_s) {
  const auto url = base_ + "/dataset/CO2EmisProg?start=" + dk_time(add_seconds(now, -300)) +
                   "&end=" + dk_time(add_seconds(now, horizon_s + 300)) +
                   "&timezone=UTC&sort=" + url_encode("Minutes5UTC ASC");
  const auto points = parse_records(get_with_retries(*transport_, url, http_).body);
  if (points.empty()) throw ProviderError("energy data service returned no forecast");
  return IntensityForecast{to_windows(points, 300.0), IntensitySource::forecast};
}

GbProvider::GbProvider(std::shared_ptr<HttpTransport> transport, std::string base_url,
                       HttpOptions http)
    : transport_(std::move(transport)), base_(std::move(base_url)), http_(http) {}

namespace {

json parse_gb_data(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderError(std::string("invalid JSON from carbon intensity service: ") + e.what());
  }
  if (!j.contains("data") || !j["data"].is_array() || j["data"].empty()) {
    throw ProviderError("carbon intensity service response lacks data");
  }
  return j["data"];
}

}  // namespace

CarbonIntensity GbProvider::current(const GeoLocation& location, WallTime now) {
  const auto data = parse_gb_data(get_with_retries(*transport_, base_ + "/intensity", http_).body);
  const auto& intensity = data.front().at("intensity");
  CarbonIntensity out;
  out.region = location.country_code;
  out.fetched_at = now;
  if (intensity.contains("actual") && intensity["actual"].is_number()) {
    out.g_per_kwh = intensity["actual"].get<double>();
    out.source = IntensitySource::realtime;
  } else if (intensity.contains("forecast") && intensity["forecast"].is_number()) {
    out.g_per_kwh = intensity["forecast"].get<double>();
    out.source = IntensitySource::forecast;
  } else {
    throw ProviderError("carbon intensity service entry has no value");
  }
  if (!(out.g_per_kwh > 0.0)) throw ProviderError("non-positive intensity from GB service");
  return out;
}

std::optional<IntensityForecast> GbProvider::forecast(const GeoLocation&, WallTime now,
                                                      double) {
  const auto url = base_ + "/intensity/" + format_iso8601_minutes(now) + "/fw48h";
  const auto data = parse_gb_data(get_with_retries(*transport_, url, http_).body);
  IntensityForecast out;
  out.source = IntensitySource::forecast;
  for (const auto& entry : data) {
    const auto& v = entry.at("intensity").at("forecast");
    if (!v.is_number()) continue;
    ForecastWindow w;
    w.start = parse_time_or_throw(entry.at("from").get<std::string>());
    w.end = parse_time_or_throw(entry.at("to").get<std::string>());
    w.g_per_kwh = v.get<double>();
    if (!out.windows.empty() && w.start < out.windows.back().end) continue;
    out.windows.push_back(w);
  }
  if (out.windows.empty()) throw ProviderError("carbon intensity service returned no forecast");
  return out;
}

void ProviderRegistry::add(const std::string& country_code,
                           std::shared_ptr<IntensityProvider> provider) {
  providers_[country_code] = std::move(provider);
}

std::shared_ptr<IntensityProvider> ProviderRegistry::find(const std::string& country_code) const {
  auto it = providers_.find(country_code);
  return it == providers_.end() ? nullptr : it->second;
}

std::vector<std::string> ProviderRegistry::regions() const {
  std::vector<std::string> out;
  for (const auto& [code, p] : providers_) out.push_back(code);
  return out;
}

ProviderRegistry ProviderRegistry::with_defaults(std::shared_ptr<HttpTransport> transport,
                                                 const IntensityConfig& config) {
  ProviderRegistry registry;
  registry.add("DK", std::make_shared<DkProvider>(transport, config.endpoints.dk_base,
                                                  config.http));
  registry.add("GB", std::make_shared<GbProvider>(transport, config.endpoints.gb_base,
                                                  config.http));
  return registry;
}

// --- service --------------------------------------------------------------

IntensityService::IntensityService(IntensityConfig config,
                                   std::shared_ptr<HttpTransport> transport,
                                   Diagnostics& diagnostics, WallClock wall_clock)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : std::make_shared<OfflineTransport>()),
      diagnostics_(diagnostics),
      wall_clock_(wall_clock ? std::move(wall_clock)
                             : WallClock([] { return std::chrono::system_clock::now(); })),
      default_(config_.default_intensity_file ? DefaultIntensity::load(*config_.default_intensity_file)
                                              : DefaultIntensity::builtin()),
      registry_(ProviderRegistry::with_defaults(transport_, config_)) {}

GeoLocation IntensityService::resolve_location(const std::optional<std::string>& override_region) {
  GeoLocation loc;
  if (override_region && !override_region->empty()) {
    loc.country_code = *override_region;
    std::transform(loc.country_code.begin(), loc.country_code.end(), loc.country_code.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    loc.resolved_from = GeoLocation::Source::override_region;
    return loc;
  }
  try {
    const auto response = get_with_retries(*transport_, config_.endpoints.geolocation, config_.http);
    const auto j = json::parse(response.body);
    const auto country = j.value("country", std::string{});
    if (country.empty()) throw ProviderError("geolocation response has no country");
    loc.country_code = country;
    loc.region_name = j.value("region", std::string{});
    loc.city = j.value("city", std::string{});
    loc.resolved_from = GeoLocation::Source::ip_lookup;
  } catch (const std::exception& e) {
    diagnostics_.warn(std::string("could not determine location: ") + e.what());
    loc = GeoLocation{};
  }
  return loc;
}

CarbonIntensity IntensityService::default_intensity(const GeoLocation& location) const {
  return CarbonIntensity{default_.g_per_kwh, location.known() ? location.country_code : "unknown",
                         wall_clock_(), IntensitySource::default_average};
}

CarbonIntensity IntensityService::fetch_current(const GeoLocation& location) {
  const WallTime now = wall_clock_();
  std::shared_ptr<IntensityProvider> provider;
  if (location.known()) provider = registry_.find(location.country_code);
  if (!provider) return default_intensity(location);
  try {
    auto value = provider->current(location, now);
    if (!std::isfinite(value.g_per_kwh) || value.g_per_kwh <= 0.0) {
      throw ProviderError("provider returned a non-positive intensity");
    }
    std::lock_guard lock(cache_mutex_);
    cache_[location.country_code] = value;
    return value;
  } catch (const std::exception& e) {
    diagnostics_.warn("fetching carbon intensity from " + provider->name() +
                      " failed: " + e.what());
  } catch (...) {
    diagnostics_.warn("fetching carbon intensity from " + provider->name() + " failed");
  }
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(location.country_code);
    if (it != cache_.end() &&
        seconds_between(it->second.fetched_at, now) <= 2.0 * config_.refresh_period_s) {
      diagnostics_.warn("reusing last carbon intensity fetched at " +
                        format_iso8601(it->second.fetched_at));
      return it->second;
    }
  }
  diagnostics_.warn("falling back to the default average carbon intensity");
  return default_intensity(location);
}

IntensityForecast IntensityService::fetch_forecast(const GeoLocation& location, double horizon_s) {
  if (!(horizon_s > 0.0)) throw InvalidArgument("forecast horizon must be positive");
  const WallTime now = wall_clock_();
  const WallTime until = add_seconds(now, horizon_s);

  std::optional<IntensityForecast> raw;
  std::shared_ptr<IntensityProvider> provider;
  if (location.known()) provider = registry_.find(location.country_code);
  if (provider) {
    try {
      raw = provider->forecast(location, now, horizon_s);
      if (raw) raw->validate();
    } catch (const std::exception& e) {
      diagnostics_.warn("fetching intensity forecast from " + provider->name() +
                        " failed: " + e.what());
      raw.reset();
    } catch (...) {
      diagnostics_.warn("fetching intensity forecast from " + provider->name() + " failed");
      raw.reset();
    }
  }

  IntensityForecast out;
  if (raw) {
    out.source = raw->source;
    for (const auto& w : raw->windows) {
      const auto lo = std::max(w.start, now);
      const auto hi = std::min(w.end, until);
      if (hi > lo) out.windows.push_back({lo, hi, w.g_per_kwh});
    }
    if (out.windows.empty()) {
      // Forecast entirely before or after the span: hold the nearest value.
      out.windows.push_back({now, until, value_at(*raw, now)});
    }
    if (out.windows.front().start > now) out.windows.front().start = now;
    if (out.windows.back().end < until) {
      diagnostics_.info("intensity forecast shorter than the horizon; holding its last value");
      out.windows.back().end = until;
    }
    return out;
  }
  const auto current = fetch_current(location);
  out.source = current.source;
  out.windows.push_back({now, until, current.g_per_kwh});
  return out;
}

}  // namespace carbonwatch
