#include "carbonwatch/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "carbonwatch/backends.hpp"
#include "carbonwatch/errors.hpp"

namespace carbonwatch {

const char* to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::gpu: return "gpu";
    case DeviceKind::cpu_package: return "cpu_package";
    case DeviceKind::dram: return "dram";
  }
  return "unknown";
}

std::optional<DeviceKind> parse_device_kind(std::string_view text) {
  if (text == "gpu") return DeviceKind::gpu;
  if (text == "cpu_package" || text == "cpu") return DeviceKind::cpu_package;
  if (text == "dram") return DeviceKind::dram;
  return std::nullopt;
}

const char* component_label(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::gpu: return "GPU";
    case DeviceKind::cpu_package: return "CPU";
    case DeviceKind::dram: return "DRAM";
  }
  return "?";
}

std::optional<Component> parse_component(std::string_view text) {
  if (text == "gpu") return Component::gpu;
  if (text == "cpu") return Component::cpu;
  if (text == "dram") return Component::dram;
  return std::nullopt;
}

const char* to_string(Component c) {
  switch (c) {
    case Component::gpu: return "gpu";
    case Component::cpu: return "cpu";
    case Component::dram: return "dram";
  }
  return "unknown";
}

std::uint64_t energy_delta_uj(const CounterReading& prev, const CounterReading& curr) {
  if (prev.device_id != curr.device_id) {
    throw InvalidArgument("counter readings belong to different devices: " +
                          prev.device_id + " vs " + curr.device_id);
  }
  if (!(curr.timestamp > prev.timestamp)) {
    throw InvalidArgument("counter readings must be strictly ordered in time");
  }
  for (const auto* r : {&prev, &curr}) {
    if (r->max_range_uj == 0) throw InvalidArgument("counter max_range must be positive");
    if (r->energy_uj > r->max_range_uj) {
      throw CounterError("counter value exceeds its max_range on " + r->device_id);
    }
  }
  if (curr.energy_uj >= prev.energy_uj) return curr.energy_uj - prev.energy_uj;
  // One wrap: the counter passed max_range and restarted from zero.
  const std::uint64_t max_range = curr.max_range_uj;
  if (prev.energy_uj > max_range) {
    throw CounterError("counter reset detected on " + curr.device_id);
  }
  return curr.energy_uj + (max_range - prev.energy_uj);
}

double power_from_counters(const CounterReading& prev, const CounterReading& curr) {
  if (!(curr.timestamp > prev.timestamp)) {
    throw InvalidArgument("counter readings must be taken at increasing times");
  }
  const auto delta = energy_delta_uj(prev, curr);
  return static_cast<double>(delta) / 1e6 / (curr.timestamp - prev.timestamp);
}

std::vector<std::unique_ptr<Backend>> make_backends(const SamplerConfig& config) {
  std::vector<std::unique_ptr<Backend>> out;
  if (config.replay_trace) {
    out.push_back(std::make_unique<ReplayBackend>(ReplayTrace::load(*config.replay_trace),
                                                  config.replay_loop));
    return out;
  }
  if (config.components.count(Component::gpu)) {
    out.push_back(std::make_unique<NvmlBackend>(config.nvml_library));
  }
  const bool cpu = config.components.count(Component::cpu) > 0;
  const bool dram = config.components.count(Component::dram) > 0;
  if (cpu || dram) {
    out.push_back(std::make_unique<PowercapBackend>(config.powercap_root, cpu, dram));
  }
  return out;
}

Sampler::Sampler(std::vector<std::unique_ptr<Backend>> backends, Diagnostics& diagnostics)
    : backends_(std::move(backends)), diagnostics_(diagnostics) {}

void Sampler::enumerate_locked() {
  if (enumerated_) return;
  enumerated_ = true;
  std::set<std::string> seen;
  for (auto& backend : backends_) {
    std::vector<Device> found;
    try {
      found = backend->enumerate();
    } catch (const std::exception& e) {
      diagnostics_.warn("backend " + backend->name() + " unavailable: " + e.what());
      disabled_.insert(backend.get());
      continue;
    }
    for (auto& device : found) {
      if (!seen.insert(device.id).second) {
        diagnostics_.warn("duplicate device id " + device.id + " from backend " +
                          backend->name() + " ignored");
        continue;
      }
      device.backend = backend->name();
      devices_.push_back(device);
      slots_.push_back(Slot{device, backend.get(), std::nullopt, std::nullopt, false});
    }
  }
}

const std::vector<Device>& Sampler::devices() {
  std::lock_guard lock(mutex_);
  enumerate_locked();
  return devices_;
}

std::vector<Device> Sampler::active_devices() {
  std::lock_guard lock(mutex_);
  enumerate_locked();
  std::vector<Device> out;
  for (const auto& slot : slots_) {
    if (!slot.excluded && !disabled_.count(slot.backend)) out.push_back(slot.device);
  }
  return out;
}

void Sampler::start(double now) {
  std::lock_guard lock(mutex_);
  enumerate_locked();
  for (auto& backend : backends_) {
    if (disabled_.count(backend.get())) continue;
    try {
      backend->start(now);
    } catch (const std::exception& e) {
      disable_backend_locked(backend.get(), e.what());
    }
  }
}

void Sampler::disable_backend_locked(Backend* backend, const std::string& why) {
  if (!disabled_.insert(backend).second) return;
  diagnostics_.warn("backend " + backend->name() +
                    " failed and is disabled for the rest of the session: " + why);
}

PowerSample Sampler::sample_locked(Slot& slot, double now) {
  Reading reading = slot.backend->read(slot.device, now);
  PowerSample sample{slot.device.id, now, 0.0, true};
  if (const auto* instant = std::get_if<InstantPower>(&reading)) {
    if (!std::isfinite(instant->watts) || instant->watts < 0.0) {
      diagnostics_.warn("device " + slot.device.id + " reported an invalid power value");
      sample.defined = false;
    } else {
      sample.power_w = instant->watts;
    }
  } else {
    auto counter = std::get<CounterReading>(reading);
    counter.device_id = slot.device.id;
    counter.timestamp = now;
    if (slot.last_counter) {
      try {
        sample.power_w = power_from_counters(*slot.last_counter, counter);
      } catch (const Error& e) {
        diagnostics_.warn("device " + slot.device.id + ": " + e.what());
        sample.defined = false;
      }
    } else {
      sample.defined = false;
    }
    slot.last_counter = counter;
  }
  slot.last_time = now;
  return sample;
}

PowerSample Sampler::sample(const Device& device, double now) {
  std::lock_guard lock(mutex_);
  enumerate_locked();
  auto it = std::find_if(slots_.begin(), slots_.end(),
                         [&](const Slot& s) { return s.device.id == device.id; });
  if (it == slots_.end()) throw SampleError("unknown device " + device.id, true);
  if (it->excluded || disabled_.count(it->backend)) {
    throw SampleError("device " + device.id + " is no longer sampled", true);
  }
  try {
    return sample_locked(*it, now);
  } catch (const SampleError& e) {
    if (e.vanished()) {
      it->excluded = true;
      diagnostics_.warn("device " + device.id + " vanished and is excluded: " + e.what());
    } else {
      disable_backend_locked(it->backend, e.what());
    }
    throw;
  } catch (const std::exception& e) {
    disable_backend_locked(it->backend, e.what());
    throw SampleError(e.what(), false);
  }
}

std::vector<PowerSample> Sampler::sample_all(double now) {
  std::lock_guard lock(mutex_);
  enumerate_locked();
  std::vector<PowerSample> out;
  for (auto& slot : slots_) {
    if (slot.excluded || disabled_.count(slot.backend)) continue;
    if (slot.last_time && *slot.last_time >= now) continue;
    try {
      out.push_back(sample_locked(slot, now));
    } catch (const SampleError& e) {
      if (e.vanished()) {
        slot.excluded = true;
        diagnostics_.warn("device " + slot.device.id + " vanished and is excluded: " + e.what());
      } else {
        disable_backend_locked(slot.backend, e.what());
      }
    } catch (const std::exception& e) {
      disable_backend_locked(slot.backend, e.what());
    } catch (...) {
      disable_backend_locked(slot.backend, "unknown error");
    }
  }
  return out;
}

std::vector<Device> enumerate_devices(const SamplerConfig& config, Diagnostics& diagnostics) {
  std::vector<std::unique_ptr<Backend>> backends;
  try {
    backends = make_backends(config);
  } catch (const std::exception& e) {
    diagnostics.warn(std::string("could not create backends: ") + e.what());
  }
  Sampler sampler(std::move(backends), diagnostics);
  return sampler.devices();
}

}  // namespace carbonwatch
