#pragma once

#include <iosfwd>
#include <optional>

#include <nlohmann/json.hpp>

namespace carbonwatch {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct EstimateInput {
  double flops_total = 0.0;
  double device_flops = 0.0;  // sustained FLOP/s of one device
  double tdp_w = 0.0;
  int device_count = 1;
  double pue = 1.58;
  double intensity_g_per_kwh = 0.0;
  double car_g_per_km = 120.4;
};

struct EstimateResult {
  double compute_seconds = 0.0;  // single-device seconds
  double device_days = 0.0;
  double wall_seconds = 0.0;     // compute_seconds spread over device_count
  double energy_kwh = 0.0;
  double emissions_g = 0.0;
  double km_by_car = 0.0;
};

/// Back-of-envelope footprint of a compute budget at rated power. Throws
/// InvalidArgument unless every input is positive.
EstimateResult estimate(const EstimateInput& input);

nlohmann::json to_json(const EstimateResult& result);

/// Entry point of the `carbonwatch` command. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace carbonwatch
