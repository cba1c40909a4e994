#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>

#include "carbonwatch/energy.hpp"
#include "carbonwatch/sampling.hpp"

namespace carbonwatch {

struct ConversionFactors {
  /// Average CO2 of a newly registered car in the EU, 2018 (g/km).
  double car_g_per_km = 120.4;

  void validate() const;
};

/// Carbon footprint in gCO2eq: energy × intensity. Throws on negative energy
/// or non-positive intensity.
double footprint_g(double energy_kwh, double intensity_g_per_kwh);

/// Kilometres travelled by car emitting the same amount.
double to_km_by_car(double emissions_g, const ConversionFactors& factors = {});

enum class ReportKind { predicted, actual };

struct FootprintReport {
  int epochs = 0;
  double duration_s = 0.0;
  double energy_kwh = 0.0;
  double emissions_g = 0.0;
  double km_by_car = 0.0;
  double intensity_g_per_kwh = 0.0;
  std::string location;
  /// Per-device energy after PUE, kWh.
  std::map<std::string, double> device_energy_kwh;
  /// Energy (kWh, after PUE) and percentage per component label
  /// ("GPU", "CPU", "DRAM").
  std::map<std::string, double> component_energy_kwh;
  std::map<std::string, double> component_share_pct;
};

/// Fills a report from measured epochs. Emissions and km are derived from
/// the full-precision energy.
FootprintReport make_report(std::span<const EpochRecord> epochs, std::span<const Device> devices,
                            const PueConfig& pue, double intensity_g_per_kwh,
                            const ConversionFactors& factors, std::string location);

/// The multi-line consumption block:
///
///     Predicted consumption for 100 epoch(s):
///     <TAB>Time:   1:54:54
///     <TAB>Energy: 1.159974 kWh
///     <TAB>CO2eq:  62.744032 g
///     <TAB>This is equivalent to:
///     <TAB>0.521130 km travelled by car
///
/// No trailing newline.
std::string render_report(const FootprintReport& report, ReportKind kind);

/// Per-component share lines, e.g. "\tGPU: 57.12% (0.662000 kWh)".
std::string render_breakdown(const FootprintReport& report);

struct ParsedReport {
  ReportKind kind = ReportKind::actual;
  int epochs = 0;
  double duration_s = 0.0;
  double energy_kwh = 0.0;
  double emissions_g = 0.0;
  double km_by_car = 0.0;
};

/// Inverse of render_report. Throws InvalidArgument on text that does not
/// follow the block layout.
ParsedReport parse_report(std::string_view text);

}  // namespace carbonwatch
