#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "carbonwatch/diagnostics.hpp"
#include "carbonwatch/sampling.hpp"

namespace carbonwatch {

inline constexpr double kJoulesPerKwh = 3.6e6;

/// Power usage effectiveness: facility energy over IT-equipment energy.
struct PueConfig {
  /// Global data-centre average for 2018; the default.
  static constexpr double kGlobalAverage2018 = 1.58;
  /// Global data-centre average for 2019.
  static constexpr double kGlobalAverage2019 = 1.67;

  double pue = kGlobalAverage2018;

  /// Throws InvalidArgument unless pue is finite and >= 1.
  void validate() const;
};

struct EpochRecord {
  int index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double duration_s = 0.0;
  std::map<std::string, double> avg_power_w;
  std::map<std::string, double> energy_j;
  /// Devices with no samples in this epoch whose average was carried over
  /// from the previous epoch.
  std::vector<std::string> carried_forward;

  /// Sum of per-device energy, before PUE.
  double it_energy_j() const;
};

using DeviceSamples = std::map<std::string, std::vector<PowerSample>>;

/// Closes one epoch: per-device arithmetic mean of the defined samples and
/// energy = mean × duration.
///
/// Every key of `samples` is a device expected in this epoch. A device with
/// no defined samples takes its average from `previous` (and is listed in
/// `carried_forward`), or is omitted with a warning when there is nothing to
/// carry. Throws InvalidArgument if end <= start or a sample lies outside
/// [start, end], NoMeasurements if no device ends up with a value.
EpochRecord close_epoch(int index, const DeviceSamples& samples, double start_s, double end_s,
                        const EpochRecord* previous = nullptr,
                        Diagnostics* diagnostics = nullptr);

/// PUE × Σ_epochs Σ_devices avg_power × duration, in joules.
double total_energy_j(std::span<const EpochRecord> epochs, const PueConfig& pue);

/// Same as total_energy_j, converted to kWh. Throws on an empty list.
double total_energy_kwh(std::span<const EpochRecord> epochs, const PueConfig& pue);

}  // namespace carbonwatch
