// prosogest/gradient.hpp
//
// One-dimensional Canny-style gradient: correlate with a derivative-of-
// Gaussian kernel and report the steepest response. Used on F0 segments
// (sigma 0.8 frames) and on hand-speed profiles (sigma 1.0 frames).

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "prosogest/error.hpp"

namespace prosogest {

inline constexpr double kPitchGradientSigma = 0.8;
inline constexpr double kVelocityGradientSigma = 1.0;

struct GradientPeak {
  double magnitude = 0.0;  // |d/dt| in value units per second
  double time = 0.0;       // seconds
};

/// Taps d[-R..R], R = ceil(4 sigma), scaled so sum_j j*d[j] = 1: correlating
/// a unit-slope ramp gives exactly 1 per sample.
inline std::vector<double> derivative_of_gaussian(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * static_cast<std::size_t>(radius) + 1);
  double norm = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    const double v = j * std::exp(-0.5 * j * j / (sigma * sigma));
    taps[static_cast<std::size_t>(j + radius)] = v;
    norm += j * v;
  }
  for (auto& v : taps) v /= norm;
  return taps;
}

/// Smoothed derivative of a uniformly sampled series (edges replicated).
inline std::vector<double> gaussian_derivative(std::span<const double> values, double dt,
                                               double sigma) {
  const auto taps = derivative_of_gaussian(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int n = static_cast<int>(values.size());
  std::vector<double> out(values.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = -radius; j <= radius; ++j) {
      const int k = std::clamp(i + j, 0, n - 1);
      acc += taps[static_cast<std::size_t>(j + radius)] * values[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(i)] = acc / dt;
  }
  return out;
}

/// Largest |smoothed derivative| and the time of its first occurrence.
/// `values[i]` is sampled at t0 + i*dt; sigma is in samples.
inline GradientPeak max_gradient(std::span<const double> values, double t0, double dt,
                                 double sigma) {
  if (values.size() < 3) {
    throw Error(ErrorCode::TooFewSamples,
                std::to_string(values.size()) + " samples (need at least 3)");
  }
  if (!(sigma > 0.0) || !(dt > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "sigma and dt must be positive");
  }
  const auto d = gaussian_derivative(values, dt, sigma);
  GradientPeak best{std::abs(d[0]), t0};
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (std::abs(d[i]) > best.magnitude) best = {std::abs(d[i]), t0 + static_cast<double>(i) * dt};
  }
  return best;
}

}  // namespace prosogest
