#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "carbonwatch/sampling.hpp"

namespace carbonwatch {

/// One row of a replay trace.
struct TraceRow {
  double timestamp_s = 0.0;
  std::string device_id;
  double power_w = 0.0;
};

/// Parsed replay trace.
///
/// Text format, one record per line, '#' starts a comment line:
///
///     devices,gpu0:gpu=TITAN RTX,cpu0:cpu_package=cpu:0
///     0,gpu0,250
///     0,cpu0,60
///     10,gpu0,245.5
///
/// The first non-comment line lists the devices as `id:kind[=label]`.
/// Remaining lines are `timestamp_s,device_id,power_w`, timestamps relative
/// to the start of the session and strictly increasing per device.
struct ReplayTrace {
  std::vector<Device> devices;
  std::map<std::string, std::vector<TraceRow>> rows;  // per device, by time

  static ReplayTrace parse(std::istream& in);
  static ReplayTrace load(const std::filesystem::path& path);
  void save(std::ostream& out) const;

  /// Sample-and-hold value of `device_id` at `t` seconds after the origin.
  /// Before the first row the first value is used; after the last row the
  /// last value holds (or the trace wraps when `loop`).
  double power_at(const std::string& device_id, double t, bool loop = false) const;
};

/// Deterministic backend that echoes a recorded trace.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(ReplayTrace trace, bool loop = false);
  std::string name() const override { return "replay"; }
  std::vector<Device> enumerate() override;
  void start(double now) override;
  Reading read(const Device& device, double now) override;

 private:
  ReplayTrace trace_;
  bool loop_;
  std::optional<double> origin_;
};

/// CPU package and DRAM energy counters from the OS power-capping tree
/// (`<root>/intel-rapl:N/energy_uj`, `max_energy_range_uj`, `name`).
/// Package domains map to cpu_package devices, their `dram` subdomains to
/// dram devices; core/uncore subdomains are skipped because the package
/// counter already includes them.
class PowercapBackend final : public Backend {
 public:
  PowercapBackend(std::filesystem::path root, bool packages, bool dram);
  std::string name() const override { return "powercap"; }
  std::vector<Device> enumerate() override;
  Reading read(const Device& device, double now) override;

 private:
  std::filesystem::path root_;
  bool packages_;
  bool dram_;
  std::map<std::string, std::filesystem::path> domains_;  // device id -> dir
};

/// GPU board power through the vendor management library, loaded at runtime
/// so the binary has no hard dependency on the driver.
class NvmlBackend final : public Backend {
 public:
  explicit NvmlBackend(std::string library);
  ~NvmlBackend() override;
  NvmlBackend(const NvmlBackend&) = delete;
  NvmlBackend& operator=(const NvmlBackend&) = delete;

  std::string name() const override { return "nvml"; }
  std::vector<Device> enumerate() override;
  Reading read(const Device& device, double now) override;

 private:
  struct Api;
  std::string library_;
  void* handle_ = nullptr;
  Api* api_ = nullptr;
  bool initialized_ = false;
  std::map<std::string, void*> devices_;  // device id -> nvmlDevice_t
};

}  // namespace carbonwatch
