#include <gtest/gtest.h>

#include <random>

#include "carbonwatch/backends.hpp"
#include "carbonwatch/errors.hpp"
#include "carbonwatch/sampling.hpp"
#include "test_support.hpp"

using namespace carbonwatch;
using namespace cwtest;

TEST(DeviceKind, RoundTripsThroughText) {
  for (auto k : {DeviceKind::gpu, DeviceKind::cpu_package, DeviceKind::dram}) {
    EXPECT_EQ(parse_device_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_device_kind("cpu"), DeviceKind::cpu_package);
  EXPECT_FALSE(parse_device_kind("tpu").has_value());
  EXPECT_STREQ(component_label(DeviceKind::gpu), "GPU");
  EXPECT_STREQ(component_label(DeviceKind::cpu_package), "CPU");
  EXPECT_STREQ(component_label(DeviceKind::dram), "DRAM");
}

TEST(Component, ParsesNames) {
  EXPECT_EQ(parse_component("gpu"), Component::gpu);
  EXPECT_EQ(parse_component("cpu"), Component::cpu);
  EXPECT_EQ(parse_component("dram"), Component::dram);
  EXPECT_FALSE(parse_component("disk").has_value());
}

TEST(PowerFromCounters, TenWattsOverOneSecond) {
  CounterReading prev{"cpu0", 0.0, 1'000'000, 1'000'000'000};
  CounterReading curr{"cpu0", 1.0, 11'000'000, 1'000'000'000};
  EXPECT_DOUBLE_EQ(power_from_counters(prev, curr), 10.0);
}

TEST(PowerFromCounters, WrapAroundAddsMaxRange) {
  CounterReading prev{"cpu0", 0.0, 900'000'000'000'000ull, 1'000'000'000'000'000ull};
  CounterReading curr{"cpu0", 10.0, 10'000'000'000'000ull, 1'000'000'000'000'000ull};
  EXPECT_EQ(energy_delta_uj(prev, curr), 110'000'000'000'000ull);
  EXPECT_DOUBLE_EQ(power_from_counters(prev, curr), 11'000'000.0);
}

TEST(PowerFromCounters, UnchangedCounterIsZeroWatts) {
  CounterReading prev{"cpu0", 0.0, 5'000, 1'000'000};
  CounterReading curr{"cpu0", 5.0, 5'000, 1'000'000};
  EXPECT_EQ(power_from_counters(prev, curr), 0.0);
}

TEST(PowerFromCounters, RejectsNonIncreasingTime) {
  CounterReading prev{"cpu0", 5.0, 1, 100};
  CounterReading curr{"cpu0", 5.0, 2, 100};
  EXPECT_THROW(power_from_counters(prev, curr), InvalidArgument);
  curr.timestamp = 4.0;
  EXPECT_THROW(power_from_counters(prev, curr), InvalidArgument);
}

TEST(PowerFromCounters, RejectsValuesAboveRange) {
  CounterReading prev{"cpu0", 0.0, 50, 100};
  CounterReading curr{"cpu0", 1.0, 150, 100};
  EXPECT_THROW(energy_delta_uj(prev, curr), CounterError);
  curr.max_range_uj = 0;
  EXPECT_THROW(energy_delta_uj(prev, curr), InvalidArgument);
}

TEST(PowerFromCounters, WrappedReconstructionIsExactOnRandomSequences) {
  std::mt19937_64 rng(20200518);
  for (int series = 0; series < 1000; ++series) {
    const std::uint64_t max_range =
        std::uniform_int_distribution<std::uint64_t>(1'000, 262'143'328'850ull)(rng);
    std::uniform_int_distribution<std::uint64_t> step(0, max_range - 1);
    std::uint64_t truth = std::uniform_int_distribution<std::uint64_t>(0, max_range)(rng);
    const std::uint64_t start = truth;
    std::uint64_t reconstructed = 0;
    CounterReading prev{"d", 0.0, truth % max_range, max_range};
    const int n = std::uniform_int_distribution<int>(2, 60)(rng);
    for (int i = 1; i < n; ++i) {
      truth += step(rng);
      CounterReading curr{"d", static_cast<double>(i), truth % max_range, max_range};
      reconstructed += energy_delta_uj(prev, curr);
      prev = curr;
    }
    ASSERT_EQ(reconstructed, truth - start) << "series " << series;
  }
}

namespace {

ReplayTrace parse_trace(const std::string& text) {
  std::istringstream in(text);
  return ReplayTrace::parse(in);
}

}  // namespace

TEST(Sampler, ReplayEchoesTraceValues) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<ReplayBackend>(
      parse_trace("devices,gpu0:gpu\n0,gpu0,15\n10,gpu0,250\n")));
  Sampler sampler(std::move(backends), diag);
  ASSERT_EQ(sampler.devices().size(), 1u);
  sampler.start(100.0);
  EXPECT_DOUBLE_EQ(sampler.sample(sampler.devices()[0], 105.0).power_w, 15.0);
  const auto s = sampler.sample(sampler.devices()[0], 110.0);
  EXPECT_DOUBLE_EQ(s.power_w, 250.0);
  EXPECT_DOUBLE_EQ(s.timestamp, 110.0);
  EXPECT_TRUE(s.defined);
  EXPECT_EQ(s.device_id, "gpu0");
}

TEST(Sampler, EnumeratesTwoDeviceTrace) {
  Diagnostics diag;
  SamplerConfig config;
  config.replay_trace = trace_fixture("two_devices.trace");
  const auto devices = enumerate_devices(config, diag);
  ASSERT_EQ(devices.size(), 2u);
  EXPECT_EQ(devices[0].kind, DeviceKind::gpu);
  EXPECT_EQ(devices[1].kind, DeviceKind::cpu_package);
  EXPECT_EQ(devices[0].backend, "replay");
}

TEST(Sampler, AllComponentsDisabledGivesNoDevices) {
  Diagnostics diag;
  SamplerConfig config;
  config.components.clear();
  EXPECT_TRUE(enumerate_devices(config, diag).empty());
}

TEST(Sampler, UnavailableHardwareContributesZeroDevicesWithWarning) {
  Diagnostics diag;
  SamplerConfig config;
  config.powercap_root = "/nonexistent/powercap";
  config.nvml_library = "libdefinitely-not-nvml.so";
  EXPECT_TRUE(enumerate_devices(config, diag).empty());
  EXPECT_EQ(diag.count(Severity::warning), 2u);
  EXPECT_TRUE(diag.contains("nvml"));
  EXPECT_TRUE(diag.contains("powercap"));
}

TEST(Sampler, FirstCounterSampleIsUndefined) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<CounterBackend>(
      cpu("cpu0"), std::vector<std::uint64_t>{1'000'000, 11'000'000, 31'000'000}, 1'000'000'000));
  Sampler sampler(std::move(backends), diag);
  const auto d = sampler.devices()[0];
  EXPECT_FALSE(sampler.sample(d, 0.0).defined);
  const auto second = sampler.sample(d, 1.0);
  EXPECT_TRUE(second.defined);
  EXPECT_DOUBLE_EQ(second.power_w, 10.0);
  EXPECT_DOUBLE_EQ(sampler.sample(d, 3.0).power_w, 10.0);
}

TEST(Sampler, VanishedDeviceIsExcludedOthersContinue) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<FaultyBackend>(std::vector<Device>{gpu("g0")},
                                                     FaultyBackend::Fault::read_vanish, 1));
  backends.push_back(std::make_unique<ScriptedBackend>(std::vector<Device>{cpu("c0")},
                                                       [](std::size_t, double) { return 40.0; }));
  Sampler sampler(std::move(backends), diag);
  ASSERT_EQ(sampler.sample_all(0.0).size(), 2u);
  const auto second = sampler.sample_all(1.0);
  ASSERT_EQ(second.size(), 1u);
  EXPECT_EQ(second[0].device_id, "c0");
  EXPECT_EQ(sampler.active_devices().size(), 1u);
  EXPECT_TRUE(diag.contains("vanished"));
  EXPECT_THROW(sampler.sample(gpu("g0"), 2.0), SampleError);
}

TEST(Sampler, BackendFailureDisablesAllItsDevices) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<FaultyBackend>(std::vector<Device>{gpu("g0"), gpu("g1")},
                                                     FaultyBackend::Fault::read_fail, 0));
  backends.push_back(std::make_unique<ScriptedBackend>(std::vector<Device>{cpu("c0")},
                                                       [](std::size_t, double) { return 40.0; }));
  Sampler sampler(std::move(backends), diag);
  const auto samples = sampler.sample_all(0.0);
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].device_id, "c0");
  const auto active = sampler.active_devices();
  ASSERT_EQ(active.size(), 1u);
  EXPECT_EQ(active[0].id, "c0");
  EXPECT_EQ(diag.count(Severity::warning), 1u);
}

TEST(Sampler, ForeignExceptionsAreContained) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<FaultyBackend>(std::vector<Device>{gpu("g0")},
                                                     FaultyBackend::Fault::read_foreign, 0));
  Sampler sampler(std::move(backends), diag);
  EXPECT_NO_THROW(sampler.sample_all(0.0));
  EXPECT_TRUE(sampler.active_devices().empty());
}

TEST(Sampler, EnumerateAndStartFailuresDisableBackend) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<FaultyBackend>(std::vector<Device>{gpu("g0")},
                                                     FaultyBackend::Fault::enumerate));
  backends.push_back(std::make_unique<FaultyBackend>(std::vector<Device>{cpu("c0")},
                                                     FaultyBackend::Fault::start));
  Sampler sampler(std::move(backends), diag);
  EXPECT_EQ(sampler.devices().size(), 1u);
  sampler.start(0.0);
  EXPECT_TRUE(sampler.active_devices().empty());
  EXPECT_TRUE(sampler.sample_all(1.0).empty());
}

TEST(Sampler, SkipsDevicesAlreadySampledAtOrAfterNow) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<ScriptedBackend>(std::vector<Device>{cpu("c0")},
                                                       [](std::size_t, double) { return 1.0; }));
  Sampler sampler(std::move(backends), diag);
  EXPECT_EQ(sampler.sample_all(5.0).size(), 1u);
  EXPECT_TRUE(sampler.sample_all(5.0).empty());
  EXPECT_TRUE(sampler.sample_all(4.0).empty());
  EXPECT_EQ(sampler.sample_all(6.0).size(), 1u);
}

TEST(Sampler, NegativeReadingsAreNeverReportedAsPower) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<ScriptedBackend>(std::vector<Device>{cpu("c0")},
                                                       [](std::size_t, double) { return -3.0; }));
  Sampler sampler(std::move(backends), diag);
  const auto s = sampler.sample_all(0.0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_FALSE(s[0].defined);
  EXPECT_GE(s[0].power_w, 0.0);
}

TEST(Sampler, DuplicateDeviceIdsAreIgnored) {
  Diagnostics diag;
  std::vector<std::unique_ptr<Backend>> backends;
  backends.push_back(std::make_unique<ScriptedBackend>(std::vector<Device>{cpu("x")},
                                                       [](std::size_t, double) { return 1.0; }));
  backends.push_back(std::make_unique<ScriptedBackend>(std::vector<Device>{gpu("x")},
                                                       [](std::size_t, double) { return 2.0; }));
  Sampler sampler(std::move(backends), diag);
  EXPECT_EQ(sampler.devices().size(), 1u);
  EXPECT_TRUE(diag.contains("duplicate"));
}

TEST(Sampler, ReplayIsDeterministic) {
  auto run = [] {
    Diagnostics diag;
    SamplerConfig config;
    config.replay_trace = trace_fixture("idle_then_busy.trace");
    Sampler sampler(make_backends(config), diag);
    sampler.start(0.0);
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < 20; ++i) {
      for (const auto& s : sampler.sample_all(i * 4.5)) out.emplace_back(s.timestamp, s.power_w);
    }
    return out;
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a.size(), 20u);
  EXPECT_DOUBLE_EQ(a[0].second, 15.0);
  EXPECT_DOUBLE_EQ(a[7].second, 280.0);
  EXPECT_DOUBLE_EQ(a[19].second, 15.0);
}

TEST(Sampler, ReplayTraceReplacesHardwareBackends) {
  SamplerConfig config;
  config.replay_trace = trace_fixture("two_devices.trace");
  const auto backends = make_backends(config);
  ASSERT_EQ(backends.size(), 1u);
  EXPECT_EQ(backends[0]->name(), "replay");
}

TEST(Sampler, MissingReplayTraceThrows) {
  SamplerConfig config;
  config.replay_trace = "/nonexistent/trace";
  EXPECT_THROW(make_backends(config), InvalidArgument);
}
