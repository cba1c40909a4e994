#pragma once

#include <optional>
#include <span>

#include "carbonwatch/energy.hpp"
#include "carbonwatch/intensity.hpp"

namespace carbonwatch {

struct Prediction {
  int total_epochs = 0;
  int monitored_epochs = 0;
  double duration_s = 0.0;
  double energy_kwh = 0.0;
  double intensity_g_per_kwh = 0.0;
  double emissions_g = 0.0;
  IntensitySource intensity_source = IntensitySource::default_average;
  /// Span the intensity was averaged over (the predicted remaining time).
  double intensity_span_s = 0.0;
};

struct PredictorOptions {
  /// Drop epoch 0 from the per-epoch means when at least two epochs were
  /// monitored. The first epoch often runs short and light.
  bool exclude_first_epoch = false;
};

/// Linear extrapolation from the monitored epochs to `total_epochs`:
/// duration and energy are per-epoch means times the epoch count, energy
/// scaled by PUE; intensity is the forecast's time-weighted mean over the
/// predicted remaining time starting at `now`.
///
/// An empty forecast falls back to `current` as a flat value. Throws
/// InvalidArgument if epochs is empty, total_epochs < epochs.size(), or there
/// is neither a forecast nor a current value.
Prediction predict(std::span<const EpochRecord> epochs, int total_epochs, const PueConfig& pue,
                   const IntensityForecast& forecast, WallTime now,
                   const PredictorOptions& options = {},
                   const std::optional<CarbonIntensity>& current = std::nullopt);

}  // namespace carbonwatch
