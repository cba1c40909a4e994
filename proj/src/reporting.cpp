#include "carbonwatch/reporting.hpp"

#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>

#include "carbonwatch/errors.hpp"
#include "carbonwatch/timeutil.hpp"

namespace carbonwatch {

void ConversionFactors::validate() const {
  if (!std::isfinite(car_g_per_km) || car_g_per_km <= 0.0) {
    throw InvalidArgument("car emission factor must be positive");
  }
}

double footprint_g(double energy_kwh, double intensity_g_per_kwh) {
  if (!std::isfinite(energy_kwh) || energy_kwh < 0.0) {
    throw InvalidArgument("energy must be a non-negative number");
  }
  if (!std::isfinite(intensity_g_per_kwh) || intensity_g_per_kwh <= 0.0) {
    throw InvalidArgument("carbon intensity must be positive");
  }
  return energy_kwh * intensity_g_per_kwh;
}

double to_km_by_car(double emissions_g, const ConversionFactors& factors) {
  factors.validate();
  return emissions_g / factors.car_g_per_km;
}

FootprintReport make_report(std::span<const EpochRecord> epochs, std::span<const Device> devices,
                            const PueConfig& pue, double intensity_g_per_kwh,
                            const ConversionFactors& factors, std::string location) {
  FootprintReport r;
  r.epochs = static_cast<int>(epochs.size());
  r.location = std::move(location);
  r.intensity_g_per_kwh = intensity_g_per_kwh;
  for (const auto& e : epochs) {
    r.duration_s += e.duration_s;
    for (const auto& [id, joules] : e.energy_j) {
      r.device_energy_kwh[id] += joules * pue.pue / kJoulesPerKwh;
    }
  }
  r.energy_kwh = epochs.empty() ? 0.0 : total_energy_kwh(epochs, pue);
  r.emissions_g = footprint_g(r.energy_kwh, intensity_g_per_kwh);
  r.km_by_car = to_km_by_car(r.emissions_g, factors);

  double total = 0.0;
  std::map<std::string, double> by_component;
  for (const auto& [id, kwh] : r.device_energy_kwh) {
    std::string label = "other";
    for (const auto& d : devices) {
      if (d.id == id) label = component_label(d.kind);
    }
    by_component[label] += kwh;
    total += kwh;
  }
  r.component_energy_kwh = by_component;
  if (total > 0.0) {
    for (const auto& [label, kwh] : by_component) r.component_share_pct[label] = 100.0 * kwh / total;
  }
  return r;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace

std::string render_report(const FootprintReport& report, ReportKind kind) {
  std::ostringstream out;
  out << (kind == ReportKind::predicted ? "Predicted" : "Actual") << " consumption for "
      << report.epochs << " epoch(s):\n"
      << "\tTime:   " << format_duration(report.duration_s) << '\n'
      << "\tEnergy: " << fixed6(report.energy_kwh) << " kWh\n"
      << "\tCO2eq:  " << fixed6(report.emissions_g) << " g\n"
      << "\tThis is equivalent to:\n"
      << '\t' << fixed6(report.km_by_car) << " km travelled by car";
  return out.str();
}

std::string render_breakdown(const FootprintReport& report) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [label, pct] : report.component_share_pct) {
    const auto it = report.component_energy_kwh.find(label);
    const double kwh = it == report.component_energy_kwh.end() ? 0.0 : it->second;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s: %.2f%% (%.6f kWh)", label.c_str(), pct, kwh);
    if (!first) out << '\n';
    out << '\t' << buf;
    first = false;
  }
  return out.str();
}

ParsedReport parse_report(std::string_view text) {
  static const std::regex re(
      "(Predicted|Actual) consumption for (\\d+) epoch\\(s\\):\n"
      "\tTime:   (\\d+):(\\d{2}):(\\d{2})\n"
      "\tEnergy: ([0-9.]+) kWh\n"
      "\tCO2eq:  ([0-9.]+) g\n"
      "\tThis is equivalent to:\n"
      "\t([0-9.]+) km travelled by car\n?");
  std::cmatch m;
  if (!std::regex_search(text.data(), text.data() + text.size(), m, re)) {
    throw InvalidArgument("text does not contain a consumption report");
  }
  ParsedReport r;
  r.kind = m[1].str() == "Predicted" ? ReportKind::predicted : ReportKind::actual;
  r.epochs = std::stoi(m[2].str());
  r.duration_s = std::stod(m[3].str()) * 3600 + std::stod(m[4].str()) * 60 + std::stod(m[5].str());
  r.energy_kwh = std::stod(m[6].str());
  r.emissions_g = std::stod(m[7].str());
  r.km_by_car = std::stod(m[8].str());
  return r;
}

}  // namespace carbonwatch
