#include "carbonwatch/energy.hpp"

#include <cmath>

#include "carbonwatch/errors.hpp"

namespace carbonwatch {

void PueConfig::validate() const {
  if (!std::isfinite(pue) || pue < 1.0) {
    throw InvalidArgument("PUE must be a finite value >= 1.0, got " + std::to_string(pue));
  }
}

double EpochRecord::it_energy_j() const {
  double sum = 0.0;
  for (const auto& [id, joules] : energy_j) sum += joules;
  return sum;
}

EpochRecord close_epoch(int index, const DeviceSamples& samples, double start_s, double end_s,
                        const EpochRecord* previous, Diagnostics* diagnostics) {
  if (!(end_s > start_s)) throw InvalidArgument("epoch end must be after its start");
  EpochRecord record;
  record.index = index;
  record.start_s = start_s;
  record.end_s = end_s;
  record.duration_s = end_s - start_s;

  for (const auto& [device_id, series] : samples) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : series) {
      if (s.timestamp < start_s || s.timestamp > end_s) {
        throw InvalidArgument("sample for " + device_id + " lies outside the epoch");
      }
      if (!s.defined) continue;
      if (!std::isfinite(s.power_w) || s.power_w < 0.0) {
        throw InvalidArgument("sample for " + device_id + " has invalid power");
      }
      sum += s.power_w;
      ++n;
    }
    if (n > 0) {
      record.avg_power_w[device_id] = sum / static_cast<double>(n);
      continue;
    }
    if (previous) {
      if (auto it = previous->avg_power_w.find(device_id); it != previous->avg_power_w.end()) {
        record.avg_power_w[device_id] = it->second;
        record.carried_forward.push_back(device_id);
        if (diagnostics) {
          diagnostics->warn("epoch " + std::to_string(index) + ": no samples for " + device_id +
                            ", carrying forward the previous epoch average");
        }
        continue;
      }
    }
    if (diagnostics) {
      diagnostics->warn("epoch " + std::to_string(index) + ": no samples for " + device_id +
                        ", device omitted from this epoch");
    }
  }
  if (record.avg_power_w.empty()) {
    throw NoMeasurements("epoch " + std::to_string(index) + ": no measurements");
  }
  for (const auto& [device_id, watts] : record.avg_power_w) {
    record.energy_j[device_id] = watts * record.duration_s;
  }
  return record;
}

double total_energy_j(std::span<const EpochRecord> epochs, const PueConfig& pue) {
  pue.validate();
  double sum = 0.0;
  for (const auto& epoch : epochs) {
    for (const auto& [device_id, watts] : epoch.avg_power_w) sum += watts * epoch.duration_s;
  }
  return pue.pue * sum;
}

double total_energy_kwh(std::span<const EpochRecord> epochs, const PueConfig& pue) {
  if (epochs.empty()) throw InvalidArgument("total energy needs at least one epoch");
  return total_energy_j(epochs, pue) / kJoulesPerKwh;
}

}  // namespace carbonwatch
