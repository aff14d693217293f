// prosogest/pitch.hpp
//
// F0 extraction by windowed short-term autocorrelation. Each frame's
// autocorrelation is divided by the autocorrelation of the analysis window,
// which removes the taper bias at long lags. Voiced candidates are local
// maxima of that corrected function; an unvoiced candidate is always present,
// and a Viterbi pass over the candidate lattice picks the smoothest path.
//
// The contour is then cleaned (short, pitch-continuous unvoiced gaps are
// bridged) and cut into voiced segments.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "prosogest/error.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

struct PitchConfig {
  double f0_floor = 75.0;       // Hz
  double f0_ceiling = 600.0;    // Hz
  double window_s = 0.040;      // Hanning, must hold >= 3 periods at f0_floor
  double hop_s = 0.010;
  double voicing_threshold = 0.45;
  double silence_threshold = 0.03;  // relative to the global absolute peak
  double octave_cost = 0.01;        // per octave, favours higher candidates
  double octave_jump_cost = 0.35;   // per octave between consecutive frames
  double voiced_unvoiced_cost = 0.2;
  int max_candidates = 15;

  // Gap bridging
  double max_gap_s = 0.02;
  double max_gap_jump_hz = 10.0;
};

inline constexpr double kUnvoiced = 0.0;

struct PitchFrame {
  double time = 0.0;
  double f0 = kUnvoiced;   // Hz, kUnvoiced when the frame is unvoiced
  double strength = 0.0;   // corrected autocorrelation peak, 0 when unvoiced

  bool voiced() const { return f0 > 0.0; }
  bool operator==(const PitchFrame&) const = default;
};

struct PitchContour {
  std::vector<PitchFrame> frames;
  double hop = 0.01;
  double f0_floor = 75.0;
  double f0_ceiling = 600.0;

  bool operator==(const PitchContour&) const = default;
};

struct ContourSample {
  double t = 0.0;
  double f0 = 0.0;
};

/// A maximal run of voiced frames. `end` is the last frame time plus one hop,
/// so a single-frame segment lasts exactly one hop.
struct F0Segment {
  double start = 0.0;
  double end = 0.0;
  std::vector<ContourSample> samples;
  double f0_max = 0.0;
  double f0_min = 0.0;
  double f0_first = 0.0;
  double f0_last = 0.0;
  double t_of_max = 0.0;
  double t_of_min = 0.0;

  double duration() const { return end - start; }
};

namespace detail {

struct PitchCandidate {
  double f0 = kUnvoiced;
  double strength = 0.0;
  double score = 0.0;
};

inline std::vector<double> hanning(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                static_cast<double>(n));
  }
  return w;
}

/// r[k] = sum_n x[n] x[n+k] / sum_n x[n]^2 for k in [0, max_lag].
inline std::vector<double> normalized_autocorrelation(const std::vector<double>& x,
                                                      std::size_t max_lag) {
  std::vector<double> r(max_lag + 1, 0.0);
  const std::size_t n = x.size();
  for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
    double acc = 0.0;
    const double* a = x.data();
    const double* b = x.data() + k;
    for (std::size_t i = 0; i + k < n; ++i) acc += a[i] * b[i];
    r[k] = acc;
  }
  if (r[0] > 0.0) {
    const double r0 = r[0];
    for (auto& v : r) v /= r0;
  }
  return r;
}

}  // namespace detail

inline PitchContour extract_f0(const AudioBuffer& audio, const PitchConfig& cfg = {}) {
  if (!(cfg.f0_floor > 0.0 && cfg.f0_floor < cfg.f0_ceiling)) {
    throw Error(ErrorCode::InvalidArgument, "need 0 < f0_floor < f0_ceiling");
  }
  if (!(cfg.hop_s > 0.0 && cfg.window_s > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "window and hop must be positive");
  }
  if (audio.duration() < 2.0 * cfg.window_s) {
    throw Error(ErrorCode::AudioTooShort,
                std::to_string(audio.duration()) + " s is shorter than two analysis windows");
  }

  const double fs = audio.sample_rate;
  const auto win_len = static_cast<std::size_t>(std::lround(cfg.window_s * fs));
  const std::size_t half = win_len / 2;
  const auto min_lag = static_cast<std::size_t>(std::max(2.0, std::floor(fs / cfg.f0_ceiling)));
  const auto max_lag = std::min(static_cast<std::size_t>(std::ceil(fs / cfg.f0_floor)),
                                win_len / 2);
  if (min_lag + 2 > max_lag) {
    throw Error(ErrorCode::InvalidArgument, "pitch range does not fit in the analysis window");
  }

  const auto peak_reach = static_cast<std::size_t>(std::lround(0.5 * fs / cfg.f0_floor));
  const auto window = detail::hanning(win_len);
  const auto window_ac = detail::normalized_autocorrelation(window, max_lag + 1);

  double global_peak = 0.0;
  for (double s : audio.samples) global_peak = std::max(global_peak, std::abs(s));

  const auto n_frames =
      static_cast<std::size_t>(std::floor(audio.duration() / cfg.hop_s + 1e-9)) + 1;
  const double time_step_correction = 0.01 / cfg.hop_s;
  const double octave_jump = cfg.octave_jump_cost * time_step_correction;
  const double vu_cost = cfg.voiced_unvoiced_cost * time_step_correction;

  std::vector<std::vector<detail::PitchCandidate>> lattice(n_frames);
  std::vector<double> frame(win_len);
  for (std::size_t i = 0; i < n_frames; ++i) {
    auto& cands = lattice[i];
    const double t = static_cast<double>(i) * cfg.hop_s;
    const long centre = std::lround(t * fs);
    const long first = centre - static_cast<long>(half);
    const bool inside = first >= 0 &&
                        first + static_cast<long>(win_len) <= static_cast<long>(audio.samples.size());

    double local_peak = 0.0;
    if (inside) {
      double mean = 0.0;
      for (std::size_t k = 0; k < win_len; ++k) {
        frame[k] = audio.samples[static_cast<std::size_t>(first) + k];
        mean += frame[k];
      }
      mean /= static_cast<double>(win_len);
      // intensity is judged within half the longest period of the centre only
      for (std::size_t k = half - std::min(half, peak_reach); k <= std::min(win_len - 1, half + peak_reach); ++k) {
        local_peak = std::max(local_peak, std::abs(frame[k] - mean));
      }
      for (std::size_t k = 0; k < win_len; ++k) frame[k] = (frame[k] - mean) * window[k];
    }

    const double rel_peak = global_peak > 0.0 ? local_peak / global_peak : 0.0;
    const double unvoiced_score =
        cfg.voicing_threshold +
        std::max(0.0, 2.0 - rel_peak / (cfg.silence_threshold / (1.0 + cfg.voicing_threshold)));
    cands.push_back({kUnvoiced, 0.0, unvoiced_score});
    if (!inside || local_peak == 0.0) continue;

    auto r = detail::normalized_autocorrelation(frame, max_lag + 1);
    if (r[0] <= 0.0) continue;
    for (std::size_t k = 1; k <= max_lag + 1; ++k) r[k] /= window_ac[k];

    std::vector<detail::PitchCandidate> voiced;
    for (std::size_t k = min_lag; k <= max_lag; ++k) {
      if (!(r[k] >= r[k - 1] && r[k] >= r[k + 1])) continue;
      if (r[k] < cfg.voicing_threshold) continue;
      const double denom = r[k - 1] - 2.0 * r[k] + r[k + 1];
      double delta = 0.0;
      double peak = r[k];
      if (denom < 0.0) {
        delta = std::clamp(0.5 * (r[k - 1] - r[k + 1]) / denom, -0.5, 0.5);
        peak = r[k] - 0.25 * (r[k - 1] - r[k + 1]) * delta;
      }
      const double lag_s = (static_cast<double>(k) + delta) / fs;
      const double f0 = 1.0 / lag_s;
      if (f0 < cfg.f0_floor || f0 > cfg.f0_ceiling) continue;
      const double strength = std::min(peak, 1.0);
      const double score = strength - cfg.octave_cost * std::log2(cfg.f0_floor * lag_s);
      voiced.push_back({f0, strength, score});
    }
    std::sort(voiced.begin(), voiced.end(),
              [](const auto& a, const auto& b) { return a.score > b.score; });
    if (voiced.size() > static_cast<std::size_t>(cfg.max_candidates)) {
      voiced.resize(static_cast<std::size_t>(cfg.max_candidates));
    }
    cands.insert(cands.end(), voiced.begin(), voiced.end());
  }

  // Viterbi over the candidate lattice, maximizing score minus transition cost.
  auto transition = [&](const detail::PitchCandidate& a, const detail::PitchCandidate& b) {
    const bool va = a.f0 > 0.0;
    const bool vb = b.f0 > 0.0;
    if (va && vb) return octave_jump * std::abs(std::log2(a.f0 / b.f0));
    if (va != vb) return vu_cost;
    return 0.0;
  };
  std::vector<std::vector<double>> best(n_frames);
  std::vector<std::vector<std::size_t>> back(n_frames);
  best[0].resize(lattice[0].size());
  back[0].assign(lattice[0].size(), 0);
  for (std::size_t c = 0; c < lattice[0].size(); ++c) best[0][c] = lattice[0][c].score;
  for (std::size_t i = 1; i < n_frames; ++i) {
    best[i].assign(lattice[i].size(), -std::numeric_limits<double>::infinity());
    back[i].assign(lattice[i].size(), 0);
    for (std::size_t c = 0; c < lattice[i].size(); ++c) {
      for (std::size_t p = 0; p < lattice[i - 1].size(); ++p) {
        const double v = best[i - 1][p] - transition(lattice[i - 1][p], lattice[i][c]);
        if (v > best[i][c]) {
          best[i][c] = v;
          back[i][c] = p;
        }
      }
      best[i][c] += lattice[i][c].score;
    }
  }

  PitchContour contour;
  contour.hop = cfg.hop_s;
  contour.f0_floor = cfg.f0_floor;
  contour.f0_ceiling = cfg.f0_ceiling;
  contour.frames.resize(n_frames);
  std::size_t c = static_cast<std::size_t>(
      std::max_element(best.back().begin(), best.back().end()) - best.back().begin());
  for (std::size_t i = n_frames; i-- > 0;) {
    const auto& cand = lattice[i][c];
    contour.frames[i] = {static_cast<double>(i) * cfg.hop_s, cand.f0, cand.strength};
    c = back[i][c];
  }
  return contour;
}

/// Bridges every unvoiced gap shorter than cfg.max_gap_s whose flanking
/// frames differ by less than cfg.max_gap_jump_hz, interpolating linearly.
/// Both conditions must hold; other gaps are left alone.
inline PitchContour preprocess_contour(PitchContour contour, const PitchConfig& cfg = {}) {
  auto& fr = contour.frames;
  std::size_t i = 0;
  while (i < fr.size() && !fr[i].voiced()) ++i;
  while (i < fr.size()) {
    // i is voiced; find the next unvoiced run
    std::size_t gap_begin = i + 1;
    while (gap_begin < fr.size() && fr[gap_begin].voiced()) ++gap_begin;
    std::size_t gap_end = gap_begin;
    while (gap_end < fr.size() && !fr[gap_end].voiced()) ++gap_end;
    if (gap_end >= fr.size()) break;  // trailing unvoiced run is not a gap

    const auto& left = fr[gap_begin - 1];
    const auto& right = fr[gap_end];
    const std::size_t k = gap_end - gap_begin;
    const double gap_s = static_cast<double>(k) * contour.hop;
    if (gap_s < cfg.max_gap_s - 1e-9 && std::abs(right.f0 - left.f0) < cfg.max_gap_jump_hz) {
      for (std::size_t j = 1; j <= k; ++j) {
        const double a = static_cast<double>(j) / static_cast<double>(k + 1);
        auto& f = fr[gap_begin + j - 1];
        f.f0 = left.f0 + a * (right.f0 - left.f0);
        f.strength = left.strength + a * (right.strength - left.strength);
      }
    }
    i = gap_end;
  }
  return contour;
}

inline std::vector<F0Segment> segment_contour(const PitchContour& contour) {
  std::vector<F0Segment> out;
  const auto& fr = contour.frames;
  std::size_t i = 0;
  while (i < fr.size()) {
    if (!fr[i].voiced()) { ++i; continue; }
    F0Segment seg;
    seg.start = fr[i].time;
    seg.f0_max = -std::numeric_limits<double>::infinity();
    seg.f0_min = std::numeric_limits<double>::infinity();
    for (; i < fr.size() && fr[i].voiced(); ++i) {
      seg.samples.push_back({fr[i].time, fr[i].f0});
      if (fr[i].f0 > seg.f0_max) { seg.f0_max = fr[i].f0; seg.t_of_max = fr[i].time; }
      if (fr[i].f0 < seg.f0_min) { seg.f0_min = fr[i].f0; seg.t_of_min = fr[i].time; }
    }
    seg.end = seg.samples.back().t + contour.hop;
    seg.f0_first = seg.samples.front().f0;
    seg.f0_last = seg.samples.back().f0;
    out.push_back(std::move(seg));
  }
  return out;
}

/// CSV dump `t,f0,voiced`; f0 is 0 on unvoiced frames.
inline std::string format_contour(const PitchContour& contour) {
  std::string out = "t,f0,voiced\n";
  char buf[96];
  for (const auto& f : contour.frames) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d\n", f.time, f.f0, f.voiced() ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace prosogest
