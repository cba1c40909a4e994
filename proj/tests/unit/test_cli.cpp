#include <gtest/gtest.h>

#include <chrono>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carbonwatch/cli.hpp"
#include "carbonwatch/errors.hpp"
#include "carbonwatch/session_log.hpp"
#include "test_support.hpp"

using namespace carbonwatch;
using namespace cwtest;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "carbonwatch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const std::string kThreeSessions = (fixtures_dir() / "logs" / "three_sessions").string();

}  // namespace

TEST(Estimate, LargeComputeExample) {
  const auto r = estimate({3.14e23, 130e12, 250.0, 1, 1.125, 449.06, 120.4});
  EXPECT_NEAR(r.compute_seconds, 2415384615.38, 0.01);
  EXPECT_NEAR(r.device_days, 27955.84, 0.01);
  EXPECT_NEAR(r.energy_kwh, 188701.92, 0.01);
  EXPECT_NEAR(r.emissions_g / 1000.0, 84738.48, 0.01);
  EXPECT_NEAR(r.km_by_car, 703808.01, 0.01);
}

TEST(Estimate, UnitAndLinearity) {
  const auto one = estimate({1000.0 * 3600.0, 1000.0, 1000.0, 1, 1.0, 100.0, 120.4});
  EXPECT_DOUBLE_EQ(one.compute_seconds, 3600.0);
  EXPECT_DOUBLE_EQ(one.energy_kwh, 1.0);
  const auto doubled = estimate({1000.0 * 3600.0, 1000.0, 1000.0, 1, 1.0, 200.0, 120.4});
  EXPECT_DOUBLE_EQ(doubled.energy_kwh, one.energy_kwh);
  EXPECT_DOUBLE_EQ(doubled.emissions_g, 2.0 * one.emissions_g);
  const auto four = estimate({1000.0 * 3600.0, 1000.0, 1000.0, 4, 1.0, 100.0, 120.4});
  EXPECT_DOUBLE_EQ(four.wall_seconds, 900.0);
  EXPECT_DOUBLE_EQ(four.energy_kwh, 1.0);
  EXPECT_THROW(estimate({0.0, 1.0, 1.0, 1, 1.0, 1.0, 1.0}), InvalidArgument);
  EXPECT_THROW(estimate({1.0, 1.0, 1.0, 0, 1.0, 1.0, 1.0}), InvalidArgument);
}

TEST(EstimateCommand, TextOutput) {
  const auto r = cli({"estimate", "--flops", "3.14e23", "--device-flops", "130e12", "--tdp", "250",
                      "--pue", "1.125", "--intensity", "449.06"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("2415384615.38 s"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("27955.84 device-days"), std::string::npos);
  EXPECT_NE(r.out.find("188701.92 kWh"), std::string::npos);
  EXPECT_NE(r.out.find("84738.49 kg"), std::string::npos);
  EXPECT_NE(r.out.find("703808.02 km"), std::string::npos);
}

TEST(EstimateCommand, JsonAndErrors) {
  const auto r = cli({"estimate", "--flops", "3.6e6", "--device-flops", "1000", "--tdp", "1000",
                      "--pue", "1", "--intensity", "100", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_DOUBLE_EQ(j.at("energy_kwh").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j.at("emissions_g").get<double>(), 100.0);
  EXPECT_EQ(cli({"estimate", "--flops", "1"}).code, kExitUsage);
  EXPECT_EQ(cli({"estimate", "--flops", "-1", "--device-flops", "1", "--tdp", "1"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(ReportCommand, FixtureTotalsLine) {
  const auto r = cli({"report", kThreeSessions});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("3 session(s), 440 epoch(s)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Total: 37.445 kWh, 3.166 kg CO2eq, 26.296 km\n"), std::string::npos)
      << r.out;
  EXPECT_NE(r.out.find("20200518T100000Z_a1b2c3"), std::string::npos);
}

TEST(ReportCommand, Json) {
  const auto r = cli({"report", kThreeSessions, "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("sessions").size(), 3u);
  EXPECT_NEAR(j.at("total").at("km_by_car").get<double>(), 26.296, 0.001);
  for (const auto& s : j.at("sessions")) {
    EXPECT_EQ(s.at("early_stop"), s.at("session_id") == "20200518T100000Z_a1b2c3");
  }
  EXPECT_TRUE(j.at("errors").empty());
}

TEST(ReportCommand, EmptyMissingAndBrokenDirectories) {
  TempDir empty;
  const auto none = cli({"report", empty.path().string()});
  EXPECT_EQ(none.code, 0);
  EXPECT_EQ(none.out, "no sessions found\n");
  EXPECT_EQ(cli({"report", "/nonexistent/logs"}).code, kExitRuntime);

  TempDir broken;
  write_file(broken / "x_carbon.jsonl", "{\"type\":\"epoch\"}\n");
  const auto r = cli({"report", broken.path().string(), "--format", "json"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out).at("errors").size(), 1u);
}

TEST(ReportCommand, LogDirFromConfigFile) {
  TempDir dir;
  write_file(dir / "c.json", json{{"log_dir", kThreeSessions}}.dump());
  const auto r = cli({"report", "--config", (dir / "c.json").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Total: 37.445 kWh"), std::string::npos);
}

TEST(IntensityCommand, FixtureRegion) {
  const auto r = cli({"intensity", "--region", "GB", "--fixtures", http_fixtures().string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("GB: 200.00 gCO2/kWh (source: realtime)"), std::string::npos) << r.out;
}

TEST(IntensityCommand, UnknownRegionIsLabelledDefault) {
  const auto r = cli({"intensity", "--region", "XX", "--no-net", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("source"), "default");
  EXPECT_DOUBLE_EQ(j.at("g_per_kwh").get<double>(), DefaultIntensity::builtin().g_per_kwh);
  const auto text = cli({"intensity", "--region", "XX", "--no-net"});
  EXPECT_NE(text.out.find("(source: default, EU-28 2017 average)"), std::string::npos) << text.out;
}

TEST(IntensityCommand, OfflineLookupWarns) {
  const auto r = cli({"intensity", "--no-net"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("WARNING"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("source: default"), std::string::npos);
}

TEST(TrackCommand, PassesThroughExitCodeAndWritesLog) {
  TempDir logs;
  const auto r = cli({"track", "--replay", trace_fixture("two_devices.trace").string(),
                      "--interval", "0.2", "--sample-interval", "0.05", "--region", "XX",
                      "--no-net", "--log-dir", logs.path().string(), "--", "sh", "-c",
                      "sleep 0.5; exit 3"});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.out.find("Finished monitoring."), std::string::npos) << r.out;
  const auto found = find_session_logs(logs.path());
  ASSERT_EQ(found.size(), 1u);
  const auto log = parse_log(found[0]);
  EXPECT_GE(log.epochs.size(), 2u);
  ASSERT_TRUE(log.summary);
  EXPECT_FALSE(log.summary->early_stop);
  EXPECT_FALSE(log.prediction);
}

TEST(TrackCommand, FixedEpochCountPredicts) {
  TempDir logs;
  const auto r = cli({"track", "--replay", trace_fixture("two_devices.trace").string(),
                      "--epochs", "50", "--interval", "0.1", "--sample-interval", "0.02",
                      "--region", "XX", "--no-net", "--log-dir", logs.path().string(), "--",
                      "sleep", "0.45"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Predicted consumption for 50 epoch(s):"), std::string::npos) << r.out;
}

TEST(TrackCommand, SignalledChildMapsTo128Plus) {
  const auto r = cli({"track", "--replay", trace_fixture("two_devices.trace").string(),
                      "--region", "XX", "--no-net", "--", "sh", "-c", "kill -TERM $$"});
  EXPECT_EQ(r.code, 128 + 15) << r.err;
}

TEST(TrackCommand, UsageAndSpawnErrors) {
  EXPECT_EQ(cli({"track", "--no-net"}).code, kExitUsage);
  EXPECT_EQ(cli({"track", "--pue", "0.5", "--", "true"}).code, kExitUsage);
  const auto r = cli({"track", "--replay", trace_fixture("two_devices.trace").string(),
                      "--region", "XX", "--no-net", "--", "/nonexistent/binary"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("cannot run"), std::string::npos);
}
