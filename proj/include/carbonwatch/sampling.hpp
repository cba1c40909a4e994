#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "carbonwatch/diagnostics.hpp"

namespace carbonwatch {

enum class DeviceKind { gpu, cpu_package, dram };

const char* to_string(DeviceKind kind);
/// Accepts "gpu", "cpu_package" (or "cpu") and "dram".
std::optional<DeviceKind> parse_device_kind(std::string_view text);
/// "GPU", "CPU", "DRAM" as shown in the components banner.
const char* component_label(DeviceKind kind);

struct Device {
  std::string id;
  DeviceKind kind = DeviceKind::gpu;
  std::string label;
  std::string backend;

  bool operator==(const Device&) const = default;
};

struct PowerSample {
  std::string device_id;
  double timestamp = 0.0;  // monotonic seconds
  double power_w = 0.0;
  /// False for the first reading of a counter-based device, which has no
  /// interval to difference over yet. Undefined samples are never averaged.
  bool defined = true;
};

struct CounterReading {
  std::string device_id;
  double timestamp = 0.0;
  std::uint64_t energy_uj = 0;
  std::uint64_t max_range_uj = 0;
};

/// Energy consumed between two readings of a cumulative counter, correcting
/// a single wraparound at `max_range_uj`.
std::uint64_t energy_delta_uj(const CounterReading& prev, const CounterReading& curr);

/// Average power in watts over the interval between two counter readings.
double power_from_counters(const CounterReading& prev, const CounterReading& curr);

/// What a backend returns for one device: either a point power value or a
/// raw cumulative counter that the sampler differences.
struct InstantPower {
  double watts = 0.0;
};
using Reading = std::variant<InstantPower, CounterReading>;

/// A source of devices and readings. Backends are only ever called from one
/// thread at a time; the Sampler serializes access.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  /// Throws on unavailability; the sampler then treats the backend as
  /// contributing no devices.
  virtual std::vector<Device> enumerate() = 0;
  /// Called once before the first read with the session's time origin.
  virtual void start(double /*now*/) {}
  /// Throws SampleError on failure.
  virtual Reading read(const Device& device, double now) = 0;
};

enum class Component { gpu, cpu, dram };

struct SamplerConfig {
  std::set<Component> components{Component::gpu, Component::cpu, Component::dram};
  double interval_s = 10.0;
  std::filesystem::path powercap_root = "/sys/class/powercap";
  std::string nvml_library = "libnvidia-ml.so.1";
  /// When set, hardware backends are replaced by the replay backend.
  std::optional<std::filesystem::path> replay_trace;
  bool replay_loop = false;
};

std::optional<Component> parse_component(std::string_view text);
const char* to_string(Component c);

/// Builds the backends enabled by `config`.
std::vector<std::unique_ptr<Backend>> make_backends(const SamplerConfig& config);

/// Owns the backends for one session and turns their readings into power
/// samples. Thread-safe: every public member locks.
///
/// Failure policy: a device whose read reports `vanished` is excluded; any
/// other read failure disables the whole backend. Either way a warning goes
/// to Diagnostics and the remaining devices keep working.
class Sampler {
 public:
  Sampler(std::vector<std::unique_ptr<Backend>> backends, Diagnostics& diagnostics);

  /// Enumerates once. Unavailable backends contribute zero devices and a
  /// warning.
  const std::vector<Device>& devices();
  /// Devices not yet excluded by the failure policy.
  std::vector<Device> active_devices();

  void start(double now);

  /// One sample for one device. Throws SampleError (the device is excluded
  /// before the throw).
  PowerSample sample(const Device& device, double now);

  /// Samples every active device, applying the failure policy. Never throws.
  /// Devices already sampled at or after `now` are skipped so timestamps stay
  /// strictly increasing.
  std::vector<PowerSample> sample_all(double now);

 private:
  struct Slot {
    Device device;
    Backend* backend = nullptr;
    std::optional<CounterReading> last_counter;
    std::optional<double> last_time;
    bool excluded = false;
  };

  void enumerate_locked();
  PowerSample sample_locked(Slot& slot, double now);
  void disable_backend_locked(Backend* backend, const std::string& why);

  std::mutex mutex_;
  std::vector<std::unique_ptr<Backend>> backends_;
  Diagnostics& diagnostics_;
  bool enumerated_ = false;
  std::vector<Device> devices_;
  std::vector<Slot> slots_;
  std::set<Backend*> disabled_;
};

/// Convenience: build backends for `config` and enumerate them.
std::vector<Device> enumerate_devices(const SamplerConfig& config, Diagnostics& diagnostics);

}  // namespace carbonwatch
