// prosogest/kinematics.hpp
//
// Trajectory -> per-frame gesture features g, and hand-speed profiles over
// phoneme intervals.
//
// g layout (7 values): hand_vx, hand_vy, hand_ax, hand_ay, head_vx, head_vy,
// hand_speed. Positions are smoothed with a 5-frame centred moving average
// (shrinking symmetrically at the ends) before differencing.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "prosogest/error.hpp"
#include "prosogest/gradient.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

inline constexpr int kFeatureDim = 7;
inline constexpr int kSmoothingFrames = 5;

struct GestureFeature {
  double t = 0.0;
  double hand_vx = 0.0;
  double hand_vy = 0.0;
  double hand_ax = 0.0;
  double hand_ay = 0.0;
  double head_vx = 0.0;
  double head_vy = 0.0;
  double hand_speed = 0.0;

  Eigen::Matrix<double, kFeatureDim, 1> vector() const {
    Eigen::Matrix<double, kFeatureDim, 1> v;
    v << hand_vx, hand_vy, hand_ax, hand_ay, head_vx, head_vy, hand_speed;
    return v;
  }
};

using GestureStream = std::vector<GestureFeature>;

namespace detail {

inline std::vector<double> centred_moving_average(std::span<const double> x, int width) {
  const int n = static_cast<int>(x.size());
  const int half = width / 2;
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    const int r = std::min({half, i, n - 1 - i});
    const double centre = x[static_cast<std::size_t>(i)];
    double acc = 0.0;
    for (int k = i - r; k <= i + r; ++k) acc += x[static_cast<std::size_t>(k)] - centre;
    out[static_cast<std::size_t>(i)] = centre + acc / (2 * r + 1);
  }
  return out;
}

/// Central differences inside, one-sided at both ends.
inline std::vector<double> differences(std::span<const double> x, double dt) {
  const std::size_t n = x.size();
  std::vector<double> d(n);
  d[0] = (x[1] - x[0]) / dt;
  d[n - 1] = (x[n - 1] - x[n - 2]) / dt;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
  return d;
}

}  // namespace detail

inline GestureStream differentiate(const TrajectoryTrack& track) {
  const auto& fr = track.frames;
  if (fr.size() < 5) {
    throw Error(ErrorCode::TooFewFrames, std::to_string(fr.size()) + " frames (need at least 5)");
  }
  const double dt = 1.0 / track.frame_rate;
  const std::size_t n = fr.size();
  std::array<std::vector<double>, 4> pos;
  for (auto& p : pos) p.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pos[0][i] = fr[i].hand_x;
    pos[1][i] = fr[i].hand_y;
    pos[2][i] = fr[i].head_x;
    pos[3][i] = fr[i].head_y;
  }
  std::array<std::vector<double>, 4> vel;
  for (std::size_t c = 0; c < 4; ++c) {
    vel[c] = detail::differences(detail::centred_moving_average(pos[c], kSmoothingFrames), dt);
  }
  const auto ax = detail::differences(vel[0], dt);
  const auto ay = detail::differences(vel[1], dt);

  GestureStream out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& g = out[i];
    g.t = fr[i].t;
    g.hand_vx = vel[0][i];
    g.hand_vy = vel[1][i];
    g.hand_ax = ax[i];
    g.hand_ay = ay[i];
    g.head_vx = vel[2][i];
    g.head_vy = vel[3][i];
    g.hand_speed = std::hypot(g.hand_vx, g.hand_vy);
  }
  return out;
}

/// Rows are the 7-D vectors of stream[begin, end).
inline Eigen::MatrixXd feature_matrix(std::span<const GestureFeature> stream) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(stream.size()), kFeatureDim);
  for (std::size_t i = 0; i < stream.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = stream[i].vector().transpose();
  return m;
}

/// Index range [first, last) of frames with start <= t < end.
inline std::pair<std::size_t, std::size_t> frames_in(std::span<const GestureFeature> stream,
                                                     double start, double end) {
  constexpr double eps = 1e-9;
  const auto lo = std::lower_bound(stream.begin(), stream.end(), start - eps,
                                   [](const GestureFeature& g, double t) { return g.t < t; });
  const auto hi = std::lower_bound(lo, stream.end(), end - eps,
                                   [](const GestureFeature& g, double t) { return g.t < t; });
  return {static_cast<std::size_t>(lo - stream.begin()), static_cast<std::size_t>(hi - stream.begin())};
}

struct VelocityProfile {
  std::vector<double> times;
  std::vector<double> speed;
  double v_peak_time = 0.0;
  GradientPeak v_dot_max;
};

inline VelocityProfile velocity_profile(std::span<const GestureFeature> stream, double start, double end,
                                        double sigma = kVelocityGradientSigma) {
  const auto [lo, hi] = frames_in(stream, start, end);
  if (lo >= hi) {
    throw Error(ErrorCode::EmptyInterval,
                "no frames in [" + std::to_string(start) + ", " + std::to_string(end) + ")");
  }
  VelocityProfile p;
  for (std::size_t i = lo; i < hi; ++i) {
    p.times.push_back(stream[i].t);
    p.speed.push_back(stream[i].hand_speed);
  }
  const auto peak = std::max_element(p.speed.begin(), p.speed.end());  // first on ties
  p.v_peak_time = p.times[static_cast<std::size_t>(peak - p.speed.begin())];
  if (p.speed.size() >= 3) {
    const double dt = (p.times.back() - p.times.front()) / static_cast<double>(p.times.size() - 1);
    p.v_dot_max = max_gradient(p.speed, p.times.front(), dt, sigma);
  } else if (p.speed.size() == 2) {
    p.v_dot_max = {std::abs(p.speed[1] - p.speed[0]) / (p.times[1] - p.times[0]), p.times[0]};
  } else {
    p.v_dot_max = {0.0, p.times[0]};
  }
  return p;
}

/// CSV dump `t,vx,vy,ax,ay,hvx,hvy,speed`.
inline std::string format_kinematics(std::span<const GestureFeature> stream) {
  std::string out = "t,vx,vy,ax,ay,hvx,hvy,speed\n";
  char buf[320];
  for (const auto& g : stream) {
    std::snprintf(buf, sizeof buf, "%.6f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", g.t, g.hand_vx, g.hand_vy,
                  g.hand_ax, g.hand_ay, g.head_vx, g.head_vy, g.hand_speed);
    out += buf;
  }
  return out;
}

}  // namespace prosogest
