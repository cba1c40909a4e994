#include "carbonwatch/predictor.hpp"

#include <algorithm>

#include "carbonwatch/errors.hpp"

namespace carbonwatch {

Prediction predict(std::span<const EpochRecord> epochs, int total_epochs, const PueConfig& pue,
                   const IntensityForecast& forecast, WallTime now,
                   const PredictorOptions& options,
                   const std::optional<CarbonIntensity>& current) {
  if (epochs.empty()) throw InvalidArgument("prediction needs at least one monitored epoch");
  const int monitored = static_cast<int>(epochs.size());
  if (total_epochs < monitored) {
    throw InvalidArgument("total_epochs is smaller than the number of monitored epochs");
  }
  pue.validate();

  auto fit = epochs;
  if (options.exclude_first_epoch && fit.size() >= 2) fit = fit.subspan(1);

  double duration_sum = 0.0;
  double energy_sum_j = 0.0;
  for (const auto& e : fit) {
    duration_sum += e.duration_s;
    energy_sum_j += e.it_energy_j();
  }
  const double n = static_cast<double>(fit.size());

  Prediction p;
  p.total_epochs = total_epochs;
  p.monitored_epochs = monitored;
  p.duration_s = duration_sum / n * total_epochs;
  p.energy_kwh = energy_sum_j / n * total_epochs * pue.pue / kJoulesPerKwh;

  double elapsed = 0.0;
  for (const auto& e : epochs) elapsed += e.duration_s;
  const double remaining = std::max(0.0, p.duration_s - elapsed);
  p.intensity_span_s = remaining;

  if (!forecast.empty()) {
    p.intensity_source = forecast.source;
    p.intensity_g_per_kwh = remaining > 0.0
                                ? average_over(forecast, now, add_seconds(now, remaining))
                                : value_at(forecast, now);
  } else if (current) {
    p.intensity_source = current->source;
    p.intensity_g_per_kwh = current->g_per_kwh;
  } else {
    throw InvalidArgument("prediction needs a forecast or a current intensity");
  }
  p.emissions_g = p.energy_kwh * p.intensity_g_per_kwh;
  return p;
}

}  // namespace carbonwatch
