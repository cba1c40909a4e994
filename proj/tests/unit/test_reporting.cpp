#include <gtest/gtest.h>

#include "carbonwatch/errors.hpp"
#include "carbonwatch/reporting.hpp"
#include "test_support.hpp"

using namespace carbonwatch;
using namespace cwtest;

namespace {

const char* kPredicted =
    "Predicted consumption for 100 epoch(s):\n"
    "\tTime:   1:54:54\n"
    "\tEnergy: 1.159974 kWh\n"
    "\tCO2eq:  62.744032 g\n"
    "\tThis is equivalent to:\n"
    "\t0.521130 km travelled by car";

const char* kActual =
    "Actual consumption for 100 epoch(s):\n"
    "\tTime:   1:55:55\n"
    "\tEnergy: 1.334319 kWh\n"
    "\tCO2eq:  77.724065 g\n"
    "\tThis is equivalent to:\n"
    "\t0.645549 km travelled by car";

FootprintReport block(int epochs, double seconds, double kwh, double g, double km) {
  FootprintReport r;
  r.epochs = epochs;
  r.duration_s = seconds;
  r.energy_kwh = kwh;
  r.emissions_g = g;
  r.km_by_car = km;
  return r;
}

}  // namespace

TEST(Render, GoldenBlocksAreByteIdentical) {
  EXPECT_EQ(render_report(block(100, 6894, 1.159974, 62.744032, 0.521130), ReportKind::predicted),
            kPredicted);
  EXPECT_EQ(render_report(block(100, 6955, 1.334319, 77.724065, 0.645549), ReportKind::actual),
            kActual);
}

TEST(Render, ZeroReport) {
  const auto text = render_report(block(0, 0, 0, 0, 0), ReportKind::actual);
  EXPECT_EQ(text,
            "Actual consumption for 0 epoch(s):\n\tTime:   0:00:00\n\tEnergy: 0.000000 kWh\n"
            "\tCO2eq:  0.000000 g\n\tThis is equivalent to:\n\t0.000000 km travelled by car");
}

TEST(Render, ParseInvertsRender) {
  const auto p = parse_report(std::string("carbonwatch: \n") + kActual + "\n");
  EXPECT_EQ(p.kind, ReportKind::actual);
  EXPECT_EQ(p.epochs, 100);
  EXPECT_DOUBLE_EQ(p.duration_s, 6955.0);
  EXPECT_DOUBLE_EQ(p.energy_kwh, 1.334319);
  EXPECT_DOUBLE_EQ(p.emissions_g, 77.724065);
  EXPECT_DOUBLE_EQ(p.km_by_car, 0.645549);
  EXPECT_EQ(parse_report(kPredicted).kind, ReportKind::predicted);
  EXPECT_THROW(parse_report("nothing here"), InvalidArgument);
}

TEST(Footprint, Examples) {
  EXPECT_NEAR(footprint_g(1.334319, 58.25), 77.724, 0.01);
  EXPECT_NEAR(footprint_g(188701.92, 449.06), 84738484.20, 0.01);
  EXPECT_DOUBLE_EQ(footprint_g(0.0, 300.0), 0.0);
  EXPECT_THROW(footprint_g(-1.0, 300.0), InvalidArgument);
  EXPECT_THROW(footprint_g(1.0, 0.0), InvalidArgument);
}

TEST(Footprint, CarEquivalent) {
  EXPECT_NEAR(to_km_by_car(77.724065), 0.645549, 1e-6);
  EXPECT_NEAR(to_km_by_car(84738484.20), 703808.01, 0.01);
  EXPECT_DOUBLE_EQ(to_km_by_car(0.0), 0.0);
  EXPECT_DOUBLE_EQ(to_km_by_car(100.0, ConversionFactors{50.0}), 2.0);
  EXPECT_THROW(to_km_by_car(1.0, ConversionFactors{0.0}), InvalidArgument);
}

TEST(MakeReport, SharesAndDerivedValues) {
  EpochRecord e;
  e.duration_s = 100.0;
  e.avg_power_w = {{"g", 300.0}, {"c0", 50.0}, {"c1", 50.0}, {"m", 0.0}};
  e.energy_j = {{"g", 30000.0}, {"c0", 5000.0}, {"c1", 5000.0}, {"m", 0.0}};
  const std::vector<EpochRecord> epochs{e};
  const std::vector<Device> devices{gpu("g"), cpu("c0"), cpu("c1"),
                                    Device{"m", DeviceKind::dram, "m", ""}};
  const auto r = make_report(epochs, devices, PueConfig{1.5}, 100.0, ConversionFactors{}, "X");
  EXPECT_EQ(r.epochs, 1);
  EXPECT_DOUBLE_EQ(r.energy_kwh, 40000.0 * 1.5 / 3.6e6);
  EXPECT_DOUBLE_EQ(r.emissions_g, r.energy_kwh * 100.0);
  EXPECT_DOUBLE_EQ(r.km_by_car, r.emissions_g / 120.4);
  EXPECT_DOUBLE_EQ(r.component_share_pct.at("GPU"), 75.0);
  EXPECT_DOUBLE_EQ(r.component_share_pct.at("CPU"), 25.0);
  EXPECT_DOUBLE_EQ(r.component_share_pct.at("DRAM"), 0.0);
  EXPECT_EQ(render_breakdown(r),
            "\tCPU: 25.00% (0.004167 kWh)\n\tDRAM: 0.00% (0.000000 kWh)\n"
            "\tGPU: 75.00% (0.012500 kWh)");
}
