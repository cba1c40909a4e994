#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carbonwatch/diagnostics.hpp"
#include "carbonwatch/http.hpp"
#include "carbonwatch/timeutil.hpp"

namespace carbonwatch {

enum class IntensitySource { realtime, forecast, default_average };

const char* to_string(IntensitySource source);
std::optional<IntensitySource> parse_intensity_source(std::string_view text);

/// gCO2eq per kWh of electricity for one region at one time.
struct CarbonIntensity {
  double g_per_kwh = 0.0;
  std::string region;
  WallTime fetched_at{};
  IntensitySource source = IntensitySource::default_average;
};

struct ForecastWindow {
  WallTime start{};
  WallTime end{};
  double g_per_kwh = 0.0;
};

struct IntensityForecast {
  std::vector<ForecastWindow> windows;
  IntensitySource source = IntensitySource::forecast;

  /// Throws InvalidArgument unless windows are ordered, non-overlapping,
  /// non-empty in time and strictly positive.
  void validate() const;
  bool empty() const { return windows.empty(); }
};

/// Time-weighted mean of the forecast over [start, end]. A span reaching
/// outside the forecast is clamped to it (with a warning when `diagnostics`
/// is given); a span lying entirely outside takes the nearest window's value.
/// Throws InvalidArgument when end <= start or the forecast is empty.
double average_over(const IntensityForecast& forecast, WallTime start, WallTime end,
                    Diagnostics* diagnostics = nullptr);

/// Value of the window containing `t`, or of the nearest window.
double value_at(const IntensityForecast& forecast, WallTime t);

struct GeoLocation {
  enum class Source { ip_lookup, override_region, unknown };

  std::string country_code = "unknown";
  std::string region_name;
  std::string city;
  Source resolved_from = Source::unknown;

  bool known() const { return country_code != "unknown" && !country_code.empty(); }
  /// "Copenhagen, Capital Region, DK"
  std::string display() const;
};

/// Static fallback intensity with its citation, read from a data file.
struct DefaultIntensity {
  double g_per_kwh = 0.0;
  std::string region;  // e.g. "EU-28"
  int year = 0;
  std::string dataset;
  std::string url;

  static DefaultIntensity parse(std::string_view json_text);
  static DefaultIntensity load(const std::filesystem::path& path);
  /// The data file compiled into the library.
  static const DefaultIntensity& builtin();
};

struct IntensityEndpoints {
  std::string geolocation = "https://ipinfo.io/json";
  std::string dk_base = "https://api.energidataservice.dk";
  std::string gb_base = "https://api.carbonintensity.org.uk";
};

struct IntensityConfig {
  IntensityEndpoints endpoints;
  HttpOptions http;
  double refresh_period_s = 900.0;
  std::optional<std::filesystem::path> default_intensity_file;
};

/// A region-local source of real-time and (optionally) forecast intensity.
/// Implementations throw on any failure; the service handles degradation.
class IntensityProvider {
 public:
  virtual ~IntensityProvider() = default;
  virtual std::string name() const = 0;
  virtual CarbonIntensity current(const GeoLocation& location, WallTime now) = 0;
  /// Returns nullopt when the provider has no forecast capability.
  virtual std::optional<IntensityForecast> forecast(const GeoLocation& location, WallTime now,
                                                    double horizon_s) = 0;
};

/// Danish national energy-data service: 5-minute CO2 emission records for
/// the DK1/DK2 price areas, averaged across areas.
class DkProvider final : public IntensityProvider {
 public:
  DkProvider(std::shared_ptr<HttpTransport> transport, std::string base_url, HttpOptions http);
  std::string name() const override { return "energidataservice"; }
  CarbonIntensity current(const GeoLocation& location, WallTime now) override;
  std::optional<IntensityForecast> forecast(const GeoLocation& location, WallTime now,
                                            double horizon_s) override;

  /// Averages records per timestamp and orders them.
  static std::vector<std::pair<WallTime, double>> parse_records(std::string_view body);

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string base_;
  HttpOptions http_;
};

/// Great Britain national carbon-intensity service: half-hourly windows with
/// forecast and actual values.
class GbProvider final : public IntensityProvider {
 public:
  GbProvider(std::shared_ptr<HttpTransport> transport, std::string base_url, HttpOptions http);
  std::string name() const override { return "carbonintensity.org.uk"; }
  CarbonIntensity current(const GeoLocation& location, WallTime now) override;
  std::optional<IntensityForecast> forecast(const GeoLocation& location, WallTime now,
                                            double horizon_s) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string base_;
  HttpOptions http_;
};

/// Providers keyed by ISO country code.
class ProviderRegistry {
 public:
  void add(const std::string& country_code, std::shared_ptr<IntensityProvider> provider);
  std::shared_ptr<IntensityProvider> find(const std::string& country_code) const;
  std::vector<std::string> regions() const;

  /// Registry with the built-in DK and GB clients.
  static ProviderRegistry with_defaults(std::shared_ptr<HttpTransport> transport,
                                        const IntensityConfig& config);

 private:
  std::map<std::string, std::shared_ptr<IntensityProvider>> providers_;
};

/// Location lookup plus current/forecast intensity with fallback.
///
/// Fetch failures never propagate. The last successful value per region is
/// reused for up to two refresh periods; after that, or when no provider
/// covers the region, the default average is returned with its source flag.
class IntensityService {
 public:
  using WallClock = std::function<WallTime()>;

  IntensityService(IntensityConfig config, std::shared_ptr<HttpTransport> transport,
                   Diagnostics& diagnostics, WallClock wall_clock = nullptr);

  GeoLocation resolve_location(const std::optional<std::string>& override_region);
  CarbonIntensity fetch_current(const GeoLocation& location);
  /// Windows cover [now, now + horizon]. Throws InvalidArgument if
  /// horizon_s <= 0; every other failure degrades.
  IntensityForecast fetch_forecast(const GeoLocation& location, double horizon_s);

  CarbonIntensity default_intensity(const GeoLocation& location) const;
  const DefaultIntensity& default_data() const { return default_; }
  ProviderRegistry& registry() { return registry_; }
  WallTime now() const { return wall_clock_(); }

 private:
  IntensityConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Diagnostics& diagnostics_;
  WallClock wall_clock_;
  DefaultIntensity default_;
  ProviderRegistry registry_;
  std::mutex cache_mutex_;
  std::map<std::string, CarbonIntensity> cache_;
};

}  // namespace carbonwatch
