// prosogest/corpus.hpp
//
// Seeded synthetic recordings: a hand/head trajectory built from phoneme
// templates, and speech whose pitch accents are placed by per-class alignment
// rules relative to gesture events. Reference labels are exact by
// construction.
//
// Timing. Phoneme boundaries sit on the trajectory frame grid; strokes span an
// even number of frames so their minimum-jerk speed peak falls on a frame.
//
// Speech. Voiced syllables (sawtooth through two fixed formant resonators)
// separated by short pauses. An accent syllable is preceded by a long pause
// and carries an F0 peak well above the speaker's base. Every unit is
// Preparation, one or two strokes (a point stroke is always followed by a
// Hold), then Retraction.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "prosogest/error.hpp"
#include "prosogest/phoneme.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

struct Range {
  double min = 0.0;
  double max = 0.0;
};

/// Where an accent is placed relative to its phoneme.
enum class AccentAnchor {
  PeakAtVelocityPeak,  // F0 peak at the stroke's speed peak + offset
  StartAtEnd,          // accent begins at the phoneme's end (the next phoneme's onset) + offset
  StartAtOnset,        // accent begins at the phoneme's start + offset
  Uniform,             // accent begins anywhere inside the phoneme
};

struct AlignmentRule {
  AccentAnchor anchor = AccentAnchor::Uniform;
  double offset_mean = 0.0;  // s
  double offset_std = 0.0;   // s
  double rate = 0.0;         // probability that a phoneme of this class carries an accent
};

struct SyntheticRecipe {
  std::uint64_t seed = 20240607;
  int n_recordings = 40;
  int n_gesture_units = 3;  // per recording
  int sample_rate = 16000;
  double frame_rate = 25.0;

  std::array<Range, kNumClasses> duration = {{
      {0.40, 0.80},  // Preparation
      {0.32, 0.56},  // PointStroke
      {0.56, 1.00},  // ContourStroke
      {0.64, 1.04},  // CircleStroke
      {0.32, 0.80},  // Hold
      {0.40, 0.80},  // Retraction
  }};
  // relative frequency of point, contour, circle strokes
  std::array<double, 3> stroke_weights = {1.0, 1.0, 0.6};
  double second_stroke_prob = 0.35;

  // kinematics (metres)
  Range point_amplitude = {0.12, 0.25};
  double tiny_point_prob = 0.15;   // chance a point stroke is scaled down
  double tiny_point_scale = 0.3;
  Range contour_amplitude = {0.15, 0.30};
  Range contour_curvature = {0.15, 0.35};  // arc sagitta / chord length
  Range circle_radius = {0.06, 0.10};
  Range preparation_lift = {0.25, 0.35};
  double hold_drift = 0.003;
  double tracking_noise = 0.002;
  double head_noise = 0.002;

  std::array<AlignmentRule, kNumClasses> alignment = {{
      {AccentAnchor::Uniform, 0.0, 0.0, 0.1},             // Preparation
      {AccentAnchor::StartAtEnd, 0.0, 0.08, 1.0},         // PointStroke: begins near the post-stroke hold onset
      {AccentAnchor::PeakAtVelocityPeak, 0.0, 0.05, 1.0}, // ContourStroke: peaks with the hand speed
      {AccentAnchor::StartAtOnset, 0.05, 0.10, 0.8},      // CircleStroke
      {AccentAnchor::Uniform, 0.0, 0.0, 0.1},             // Hold
      {AccentAnchor::Uniform, 0.0, 0.0, 0.1},             // Retraction
  }};

  // speech
  std::vector<double> speaker_f0 = {100, 140, 190, 230};
  Range syllable_duration = {0.08, 0.15};
  Range filler_pause = {0.02, 0.05};
  double filler_f0_jitter = 0.02;  // relative
  double filler_slope = 40.0;      // Hz/s, max |slope|
  Range accent_duration = {0.20, 0.30};
  Range accent_pause = {0.25, 0.40};
  Range accent_rise = {60.0, 90.0};  // Hz above base
};

struct AccentLabel {
  double start_s = 0.0;
  double end_s = 0.0;
  double peak_s = 0.0;
  PhonemeClass owner = PhonemeClass::Hold;  // class whose rule placed it
  std::size_t phoneme = 0;                  // index of that phoneme in the reference
};

struct Recording {
  std::string id;
  int speaker = 0;
  AudioBuffer audio;
  TrajectoryTrack track;
  Segmentation reference;
  std::vector<double> v_peak_s;  // per reference interval, time of the generated speed peak
  std::vector<AccentLabel> accents;
};

// ---------------------------------------------------------------------------
// Recipe validation and JSON

namespace detail {

inline void recipe_check(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw Error(ErrorCode::InvalidRecipe, field + ": " + why);
}

inline void check_range(const Range& r, const std::string& field, bool positive = true) {
  recipe_check(std::isfinite(r.min) && std::isfinite(r.max), field, "must be finite");
  recipe_check(!positive || r.min > 0.0, field, "must be positive");
  recipe_check(r.min <= r.max, field, "min exceeds max");
}

inline std::string anchor_name(AccentAnchor a) {
  switch (a) {
    case AccentAnchor::PeakAtVelocityPeak: return "peak_at_velocity_peak";
    case AccentAnchor::StartAtEnd: return "start_at_end";
    case AccentAnchor::StartAtOnset: return "start_at_onset";
    case AccentAnchor::Uniform: return "uniform";
  }
  return "uniform";
}

inline std::optional<AccentAnchor> parse_anchor(std::string_view s) {
  for (auto a : {AccentAnchor::PeakAtVelocityPeak, AccentAnchor::StartAtEnd, AccentAnchor::StartAtOnset,
                 AccentAnchor::Uniform}) {
    if (anchor_name(a) == s) return a;
  }
  return std::nullopt;
}

}  // namespace detail

inline void validate(const SyntheticRecipe& r) {
  using detail::check_range;
  using detail::recipe_check;
  recipe_check(r.n_recordings >= 0, "n_recordings", "must be non-negative");
  recipe_check(r.n_gesture_units >= 0, "n_gesture_units", "must be non-negative");
  recipe_check(r.sample_rate >= 8000, "sample_rate", "must be at least 8000");
  recipe_check(r.frame_rate > 0.0 && std::isfinite(r.frame_rate), "frame_rate", "must be positive");
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::string name(name_of(kAllClasses[c]));
    check_range(r.duration[c], "duration." + name);
    const auto& a = r.alignment[c];
    recipe_check(a.offset_std >= 0.0, "alignment." + name + ".offset_std", "must be non-negative");
    recipe_check(a.rate >= 0.0 && a.rate <= 1.0, "alignment." + name + ".rate", "must lie in [0, 1]");
    recipe_check(std::isfinite(a.offset_mean), "alignment." + name + ".offset_mean", "must be finite");
  }
  double w = 0.0;
  for (double v : r.stroke_weights) {
    recipe_check(v >= 0.0 && std::isfinite(v), "stroke_weights", "must be non-negative");
    w += v;
  }
  recipe_check(w > 0.0 || r.n_gesture_units == 0, "stroke_weights", "need at least one positive weight");
  recipe_check(r.second_stroke_prob >= 0.0 && r.second_stroke_prob <= 1.0, "second_stroke_prob", "must lie in [0, 1]");
  recipe_check(r.tiny_point_prob >= 0.0 && r.tiny_point_prob <= 1.0, "tiny_point_prob", "must lie in [0, 1]");
  recipe_check(r.tiny_point_scale > 0.0, "tiny_point_scale", "must be positive");
  check_range(r.point_amplitude, "point_amplitude");
  check_range(r.contour_amplitude, "contour_amplitude");
  check_range(r.contour_curvature, "contour_curvature", false);
  check_range(r.circle_radius, "circle_radius");
  check_range(r.preparation_lift, "preparation_lift");
  recipe_check(r.hold_drift >= 0.0, "hold_drift", "must be non-negative");
  recipe_check(r.tracking_noise >= 0.0, "tracking_noise", "must be non-negative");
  recipe_check(r.head_noise >= 0.0, "head_noise", "must be non-negative");
  recipe_check(!r.speaker_f0.empty(), "speaker_f0", "needs at least one speaker");
  for (double f : r.speaker_f0) recipe_check(f >= 80.0 && f <= 400.0, "speaker_f0", "each base F0 must lie in [80, 400] Hz");
  check_range(r.syllable_duration, "syllable_duration");
  check_range(r.filler_pause, "filler_pause");
  check_range(r.accent_duration, "accent_duration");
  check_range(r.accent_pause, "accent_pause");
  check_range(r.accent_rise, "accent_rise");
  recipe_check(r.filler_f0_jitter >= 0.0, "filler_f0_jitter", "must be non-negative");
  recipe_check(r.filler_slope >= 0.0, "filler_slope", "must be non-negative");
}

inline nlohmann::ordered_json to_json(const Range& r) { return nlohmann::ordered_json::array({r.min, r.max}); }

inline nlohmann::ordered_json to_json(const SyntheticRecipe& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  j["n_recordings"] = r.n_recordings;
  j["n_gesture_units"] = r.n_gesture_units;
  j["sample_rate"] = r.sample_rate;
  j["frame_rate"] = r.frame_rate;
  nlohmann::ordered_json dur, align;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::string name(name_of(kAllClasses[c]));
    dur[name] = to_json(r.duration[c]);
    const auto& a = r.alignment[c];
    align[name] = {{"anchor", detail::anchor_name(a.anchor)},
                   {"offset_mean", a.offset_mean},
                   {"offset_std", a.offset_std},
                   {"rate", a.rate}};
  }
  j["duration"] = dur;
  j["stroke_weights"] = r.stroke_weights;
  j["second_stroke_prob"] = r.second_stroke_prob;
  j["point_amplitude"] = to_json(r.point_amplitude);
  j["tiny_point_prob"] = r.tiny_point_prob;
  j["tiny_point_scale"] = r.tiny_point_scale;
  j["contour_amplitude"] = to_json(r.contour_amplitude);
  j["contour_curvature"] = to_json(r.contour_curvature);
  j["circle_radius"] = to_json(r.circle_radius);
  j["preparation_lift"] = to_json(r.preparation_lift);
  j["hold_drift"] = r.hold_drift;
  j["tracking_noise"] = r.tracking_noise;
  j["head_noise"] = r.head_noise;
  j["alignment"] = align;
  j["speaker_f0"] = r.speaker_f0;
  j["syllable_duration"] = to_json(r.syllable_duration);
  j["filler_pause"] = to_json(r.filler_pause);
  j["filler_f0_jitter"] = r.filler_f0_jitter;
  j["filler_slope"] = r.filler_slope;
  j["accent_duration"] = to_json(r.accent_duration);
  j["accent_pause"] = to_json(r.accent_pause);
  j["accent_rise"] = to_json(r.accent_rise);
  return j;
}

/// Fields missing from `j` keep their defaults; unknown or mistyped fields
/// raise InvalidRecipe naming the field.
inline SyntheticRecipe recipe_from_json(const nlohmann::json& j) {
  SyntheticRecipe r;
  if (!j.is_object()) throw Error(ErrorCode::InvalidRecipe, "recipe: must be an object");
  auto get = [&](const nlohmann::json& v, const std::string& field, auto& out) {
    try {
      out = v.get<std::remove_reference_t<decltype(out)>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::InvalidRecipe, field + ": wrong type");
    }
  };
  auto get_range = [&](const nlohmann::json& v, const std::string& field, Range& out) {
    std::vector<double> p;
    get(v, field, p);
    if (p.size() != 2) throw Error(ErrorCode::InvalidRecipe, field + ": expected [min, max]");
    out = {p[0], p[1]};
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") get(v, key, r.seed);
    else if (key == "n_recordings") get(v, key, r.n_recordings);
    else if (key == "n_gesture_units") get(v, key, r.n_gesture_units);
    else if (key == "sample_rate") get(v, key, r.sample_rate);
    else if (key == "frame_rate") get(v, key, r.frame_rate);
    else if (key == "stroke_weights") get(v, key, r.stroke_weights);
    else if (key == "second_stroke_prob") get(v, key, r.second_stroke_prob);
    else if (key == "point_amplitude") get_range(v, key, r.point_amplitude);
    else if (key == "tiny_point_prob") get(v, key, r.tiny_point_prob);
    else if (key == "tiny_point_scale") get(v, key, r.tiny_point_scale);
    else if (key == "contour_amplitude") get_range(v, key, r.contour_amplitude);
    else if (key == "contour_curvature") get_range(v, key, r.contour_curvature);
    else if (key == "circle_radius") get_range(v, key, r.circle_radius);
    else if (key == "preparation_lift") get_range(v, key, r.preparation_lift);
    else if (key == "hold_drift") get(v, key, r.hold_drift);
    else if (key == "tracking_noise") get(v, key, r.tracking_noise);
    else if (key == "head_noise") get(v, key, r.head_noise);
    else if (key == "speaker_f0") get(v, key, r.speaker_f0);
    else if (key == "syllable_duration") get_range(v, key, r.syllable_duration);
    else if (key == "filler_pause") get_range(v, key, r.filler_pause);
    else if (key == "filler_f0_jitter") get(v, key, r.filler_f0_jitter);
    else if (key == "filler_slope") get(v, key, r.filler_slope);
    else if (key == "accent_duration") get_range(v, key, r.accent_duration);
    else if (key == "accent_pause") get_range(v, key, r.accent_pause);
    else if (key == "accent_rise") get_range(v, key, r.accent_rise);
    else if (key == "duration" || key == "alignment") {
      if (!v.is_object()) throw Error(ErrorCode::InvalidRecipe, key + ": must be an object");
      for (const auto& [cname, cv] : v.items()) {
        const auto c = parse_class(cname);
        const std::string field = key + "." + cname;
        if (!c) throw Error(ErrorCode::InvalidRecipe, field + ": unknown class");
        if (key == "duration") {
          get_range(cv, field, r.duration[index_of(*c)]);
          continue;
        }
        if (!cv.is_object()) throw Error(ErrorCode::InvalidRecipe, field + ": must be an object");
        auto& a = r.alignment[index_of(*c)];
        for (const auto& [ak, av] : cv.items()) {
          const std::string f = field + "." + ak;
          if (ak == "anchor") {
            std::string name;
            get(av, f, name);
            const auto anchor = detail::parse_anchor(name);
            if (!anchor) throw Error(ErrorCode::InvalidRecipe, f + ": unknown anchor '" + name + "'");
            a.anchor = *anchor;
          } else if (ak == "offset_mean") get(av, f, a.offset_mean);
          else if (ak == "offset_std") get(av, f, a.offset_std);
          else if (ak == "rate") get(av, f, a.rate);
          else throw Error(ErrorCode::InvalidRecipe, f + ": unknown field");
        }
      }
    } else {
      throw Error(ErrorCode::InvalidRecipe, key + ": unknown field");
    }
  }
  validate(r);
  return r;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
inline double uniform(Rng& rng, const Range& r) { return r.min == r.max ? r.min : uniform(rng, r.min, r.max); }
inline double normal(Rng& rng, double mean, double sd) {
  return sd > 0.0 ? std::normal_distribution<double>(mean, sd)(rng) : mean;
}
inline bool chance(Rng& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

inline double min_jerk(double u) { return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u); }

struct PlannedPhoneme {
  PhonemeClass cls;
  int first_frame;
  int n_frames;
};

// Hand path of one phoneme as a function of normalized time u in [0, 1].
struct HandPath {
  Eigen::Vector2d from, to;
  enum Kind { Straight, Arc, Loop, Still } kind = Straight;
  double bulge = 0.0;  // Arc: signed sagitta / chord
  Eigen::Vector2d centre;
  double radius = 0.0, angle0 = 0.0, turn = 1.0;

  Eigen::Vector2d at(double u) const {
    const double s = min_jerk(std::clamp(u, 0.0, 1.0));
    switch (kind) {
      case Still: return from;
      case Straight: return from + s * (to - from);
      case Arc: {
        // circular arc through from and to with sagitta bulge * chord, swept
        // at constant angular rate so the speed stays a minimum-jerk bell
        const Eigen::Vector2d d = to - from;
        const double c = d.norm();
        const double h = bulge * c;
        if (c < 1e-12 || std::abs(h) < 1e-9) return from + s * d;
        const Eigen::Vector2d n = Eigen::Vector2d(-d.y(), d.x()) / c;
        const double r = (0.25 * c * c + h * h) / (2.0 * std::abs(h));
        const Eigen::Vector2d centre = 0.5 * (from + to) + n * (h - std::copysign(r, h));
        const double a0 = std::atan2(from.y() - centre.y(), from.x() - centre.x());
        const double sweep = 2.0 * std::asin(std::min(1.0, 0.5 * c / r));
        // the apex lies on the side of n when h > 0
        const Eigen::Vector2d mid0(std::cos(a0 + 0.5 * sweep), std::sin(a0 + 0.5 * sweep));
        const double dir = (centre + r * mid0 - 0.5 * (from + to)).dot(n) * h > 0.0 ? 1.0 : -1.0;
        const double a = a0 + dir * sweep * s;
        return centre + r * Eigen::Vector2d(std::cos(a), std::sin(a));
      }
      case Loop: {
        const double a = angle0 + turn * 2.0 * std::numbers::pi * s;
        return centre + radius * Eigen::Vector2d(std::cos(a), std::sin(a));
      }
    }
    return from;
  }
};

inline int frames_for(double seconds, double frame_rate, bool even, int min_frames) {
  int k = std::max(min_frames, static_cast<int>(std::lround(seconds * frame_rate)));
  if (even && k % 2) ++k;
  return k;
}

struct Syllable {
  double start, end;
  double f0_base, slope;  // filler: base + slope (t - mid)
  bool accent = false;
  double peak = 0.0, rise = 0.0;

  double f0(double t) const {
    if (!accent) return f0_base + slope * (t - 0.5 * (start + end));
    const double w = std::max(peak - start, end - peak);
    return f0_base + rise * std::max(0.0, 1.0 - std::abs(t - peak) / w);
  }
};

inline std::vector<double> synthesize(const std::vector<Syllable>& syllables, std::size_t n_samples, int fs,
                                      Rng& rng) {
  std::vector<double> x(n_samples, 0.0);
  if (syllables.empty()) return x;  // silence stays exactly zero
  const double ramp = 0.015;
  for (const auto& s : syllables) {
    const auto a = static_cast<std::size_t>(std::ceil(s.start * fs));
    const auto b = std::min(n_samples, static_cast<std::size_t>(std::floor(s.end * fs)));
    double phase = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      const double t = static_cast<double>(i) / fs;
      phase += s.f0(t) / fs;
      phase -= std::floor(phase);
      const double env = std::min({1.0, (t - s.start) / ramp, (s.end - t) / ramp});
      x[i] = env * (2.0 * phase - 1.0);
    }
  }
  // two fixed formant resonators in series
  for (const auto& [freq, bw] : {std::pair{700.0, 130.0}, std::pair{1220.0, 120.0}}) {
    const double r = std::exp(-std::numbers::pi * bw / fs);
    const double c1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / fs);
    const double c2 = -r * r;
    double y1 = 0.0, y2 = 0.0;
    for (auto& v : x) {
      const double y = (1.0 - r) * v + c1 * y1 + c2 * y2;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? 0.5 / peak : 0.0;
  for (auto& v : x) v = v * gain + uniform(rng, -1e-4, 1e-4);
  return x;
}

}  // namespace detail

inline std::string recording_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rec_%03zu", index);
  return buf;
}

/// Recording `index` of the corpus described by `recipe`; its RNG stream is
/// derived from (seed, index) only, so recordings can be generated in any
/// order or in parallel.
inline Recording generate(const SyntheticRecipe& recipe, std::size_t index = 0) {
  using namespace detail;
  validate(recipe);
  std::seed_seq seq{static_cast<std::uint32_t>(recipe.seed), static_cast<std::uint32_t>(recipe.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  Rng rng(seq);
  const double dt = 1.0 / recipe.frame_rate;
  const int fs = recipe.sample_rate;

  Recording rec;
  rec.id = recording_id(index);
  rec.speaker = static_cast<int>(index % recipe.speaker_f0.size());
  rec.audio.sample_rate = fs;
  rec.track.frame_rate = recipe.frame_rate;

  // --- phoneme plan
  std::vector<PlannedPhoneme> plan;
  int frame = 0;
  auto add = [&](PhonemeClass c) {
    const auto& d = recipe.duration[index_of(c)];
    const int min_frames = is_stroke(c) ? 4 : c == PhonemeClass::Hold ? 2 : 3;
    const int k = frames_for(uniform(rng, d), recipe.frame_rate, is_stroke(c), min_frames);
    plan.push_back({c, frame, k});
    frame += k;
  };
  const double wsum = recipe.stroke_weights[0] + recipe.stroke_weights[1] + recipe.stroke_weights[2];
  for (int u = 0; u < recipe.n_gesture_units; ++u) {
    add(PhonemeClass::Preparation);
    const int strokes = chance(rng, recipe.second_stroke_prob) ? 2 : 1;
    for (int s = 0; s < strokes; ++s) {
      double pick = uniform(rng, 0.0, wsum);
      PhonemeClass c = PhonemeClass::CircleStroke;
      if (pick < recipe.stroke_weights[0]) c = PhonemeClass::PointStroke;
      else if (pick < recipe.stroke_weights[0] + recipe.stroke_weights[1]) c = PhonemeClass::ContourStroke;
      add(c);
      if (c == PhonemeClass::PointStroke) add(PhonemeClass::Hold);
    }
    add(PhonemeClass::Retraction);
  }
  const int n_frames = frame;

  // --- trajectory
  Eigen::Vector2d hand(0.0, 0.0), head(0.0, 0.6);
  rec.track.frames.resize(static_cast<std::size_t>(n_frames));
  for (const auto& p : plan) {
    HandPath path;
    path.from = hand;
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const Eigen::Vector2d dir(std::cos(theta), std::sin(theta));
    switch (p.cls) {
      case PhonemeClass::Preparation:
        path.to = Eigen::Vector2d(uniform(rng, -0.1, 0.1), uniform(rng, recipe.preparation_lift));
        break;
      case PhonemeClass::Retraction:
        path.to = Eigen::Vector2d(normal(rng, 0.0, 0.02), normal(rng, 0.0, 0.02));
        break;
      case PhonemeClass::PointStroke: {
        double amp = uniform(rng, recipe.point_amplitude);
        if (chance(rng, recipe.tiny_point_prob)) amp *= recipe.tiny_point_scale;
        path.to = hand + amp * dir;
        break;
      }
      case PhonemeClass::ContourStroke:
        path.kind = HandPath::Arc;
        path.to = hand + uniform(rng, recipe.contour_amplitude) * dir;
        path.bulge = uniform(rng, recipe.contour_curvature) * (chance(rng, 0.5) ? 1.0 : -1.0);
        break;
      case PhonemeClass::CircleStroke:
        path.kind = HandPath::Loop;
        path.radius = uniform(rng, recipe.circle_radius);
        path.angle0 = theta + std::numbers::pi;
        path.centre = hand + path.radius * dir;
        path.turn = chance(rng, 0.5) ? 1.0 : -1.0;
        path.to = hand;
        break;
      case PhonemeClass::Hold:
        path.kind = HandPath::Still;
        path.to = hand;
        break;
    }
    Eigen::Vector2d drift = Eigen::Vector2d::Zero();
    for (int j = 0; j < p.n_frames; ++j) {
      const double u = static_cast<double>(j) / p.n_frames;
      Eigen::Vector2d pos = path.at(u);
      if (p.cls == PhonemeClass::Hold) {
        drift += Eigen::Vector2d(normal(rng, 0.0, recipe.hold_drift), normal(rng, 0.0, recipe.hold_drift));
        pos += drift;
      }
      head += Eigen::Vector2d(normal(rng, 0.0, recipe.head_noise), normal(rng, 0.0, recipe.head_noise));
      head *= 0.98;  // keep the head near its rest position
      auto& f = rec.track.frames[static_cast<std::size_t>(p.first_frame + j)];
      f.t = (p.first_frame + j) * dt;
      f.hand_x = pos.x() + normal(rng, 0.0, recipe.tracking_noise);
      f.hand_y = pos.y() + normal(rng, 0.0, recipe.tracking_noise);
      f.head_x = head.x();
      f.head_y = 0.6 + head.y();
    }
    hand = path.kind == HandPath::Still ? hand + drift : path.at(1.0);

    SegmentInterval iv;
    iv.start_s = p.first_frame * dt;
    iv.end_s = (p.first_frame + p.n_frames) * dt;
    iv.label = p.cls;
    rec.reference.push_back(iv);
    // minimum-jerk speed peaks at mid-phoneme for every moving template here
    rec.v_peak_s.push_back(iv.start_s + 0.5 * p.n_frames * dt);
  }
  const double duration = std::max(kMinAudioSeconds, n_frames * dt);

  // --- accents: stroke rules first, then the free ones, dropping collisions
  struct Candidate {
    AccentLabel label;
    double pause;
    int priority;
  };
  std::vector<Candidate> cands;
  const double f0_base = recipe.speaker_f0[static_cast<std::size_t>(rec.speaker)] * (1.0 + normal(rng, 0.0, 0.01));
  for (std::size_t k = 0; k < rec.reference.size(); ++k) {
    const auto& iv = rec.reference[k];
    const auto& rule = recipe.alignment[index_of(iv.label)];
    if (!chance(rng, rule.rate)) continue;
    const double dur = uniform(rng, recipe.accent_duration);
    const double pause = uniform(rng, recipe.accent_pause);
    const double off = normal(rng, rule.offset_mean, rule.offset_std);
    AccentLabel a;
    a.owner = iv.label;
    a.phoneme = k;
    switch (rule.anchor) {
      case AccentAnchor::PeakAtVelocityPeak:
        a.peak_s = rec.v_peak_s[k] + off;
        a.start_s = a.peak_s - uniform(rng, 0.35, 0.6) * dur;
        break;
      case AccentAnchor::StartAtEnd:
        a.start_s = iv.end_s + off;
        a.peak_s = a.start_s + uniform(rng, 0.3, 0.5) * dur;
        break;
      case AccentAnchor::StartAtOnset:
        a.start_s = iv.start_s + off;
        a.peak_s = a.start_s + uniform(rng, 0.3, 0.5) * dur;
        break;
      case AccentAnchor::Uniform:
        a.start_s = uniform(rng, iv.start_s, std::max(iv.start_s, iv.end_s - 0.1)) + off;
        a.peak_s = a.start_s + uniform(rng, 0.3, 0.5) * dur;
        break;
    }
    a.end_s = a.start_s + dur;
    cands.push_back({a, pause, rule.anchor == AccentAnchor::Uniform ? 1 : 0});
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) { return x.priority < y.priority; });
  std::vector<Candidate> kept;
  for (const auto& c : cands) {
    const double lo = c.label.start_s - c.pause;
    const double hi = c.label.end_s;
    if (lo < 0.05 || hi > duration - 0.05) continue;
    bool clash = false;
    for (const auto& k : kept) {
      if (lo < k.label.end_s + 0.02 && k.label.start_s - k.pause < hi + 0.02) clash = true;
    }
    if (!clash) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end(), [](const Candidate& x, const Candidate& y) { return x.label.start_s < y.label.start_s; });

  // --- syllables: fillers between accent regions
  std::vector<Syllable> syllables;
  auto fill = [&](double from, double to) {
    double t = from + uniform(rng, recipe.filler_pause);
    while (true) {
      const double d = uniform(rng, recipe.syllable_duration);
      if (t + d + recipe.filler_pause.min > to) break;
      Syllable s{t, t + d, f0_base * (1.0 + normal(rng, 0.0, recipe.filler_f0_jitter)),
                 uniform(rng, -recipe.filler_slope, recipe.filler_slope)};
      syllables.push_back(s);
      t = s.end + uniform(rng, recipe.filler_pause);
    }
  };
  double cursor = 0.0;
  for (const auto& c : kept) {
    fill(cursor, c.label.start_s - c.pause);
    Syllable s{c.label.start_s, c.label.end_s, f0_base, 0.0, true, c.label.peak_s, uniform(rng, recipe.accent_rise)};
    syllables.push_back(s);
    rec.accents.push_back(c.label);
    cursor = c.label.end_s;
  }
  if (recipe.n_gesture_units > 0) fill(cursor, duration - 0.05);

  const auto n_samples = static_cast<std::size_t>(std::lround(duration * fs));
  rec.audio.samples = synthesize(syllables, n_samples, fs, rng);
  return rec;
}

/// Seeded recording-level split; n_train = floor(f n + 1/2). Index lists
/// come back sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(std::size_t n, double train_fraction,
                                                                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

// ---------------------------------------------------------------------------
// On disk: <id>.wav, <id>.csv, <id>.ref.jsonl, <id>.accents.json, manifest.json

inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
  std::string id;
  int speaker = 0;
  std::string audio, trajectory, reference, accents;
  double duration_s = 0.0;
  std::size_t n_phonemes = 0;
};

struct CorpusManifest {
  SyntheticRecipe recipe;
  std::vector<ManifestEntry> recordings;
};

inline nlohmann::ordered_json accents_json(const Recording& rec) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& a : rec.accents) {
    arr.push_back({{"start_s", a.start_s}, {"end_s", a.end_s}, {"peak_s", a.peak_s}, {"owner", std::string(name_of(a.owner))}, {"phoneme", a.phoneme}});
  }
  return arr;
}

inline std::vector<AccentLabel> parse_accents(const std::string& text) {
  std::vector<AccentLabel> out;
  try {
    for (const auto& e : nlohmann::json::parse(text)) {
      AccentLabel a;
      a.start_s = e.at("start_s").get<double>();
      a.end_s = e.at("end_s").get<double>();
      a.peak_s = e.at("peak_s").get<double>();
      const auto c = parse_class(e.at("owner").get<std::string>());
      if (!c) throw Error(ErrorCode::MalformedRow, "accent owner class");
      a.owner = *c;
      a.phoneme = e.value("phoneme", std::size_t{0});
      out.push_back(a);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRow, std::string("accents: ") + e.what());
  }
  return out;
}

inline ManifestEntry write_recording(const std::filesystem::path& dir, const Recording& rec) {
  ManifestEntry e;
  e.id = rec.id;
  e.speaker = rec.speaker;
  e.audio = rec.id + ".wav";
  e.trajectory = rec.id + ".csv";
  e.reference = rec.id + ".ref.jsonl";
  e.accents = rec.id + ".accents.json";
  e.duration_s = rec.audio.duration();
  e.n_phonemes = rec.reference.size();
  write_audio(dir / e.audio, rec.audio);
  write_file_atomic(dir / e.trajectory, format_trajectory(rec.track));
  write_segmentation(dir / e.reference, rec.reference);
  write_file_atomic(dir / e.accents, accents_json(rec).dump(1) + "\n");
  return e;
}

inline nlohmann::ordered_json to_json(const CorpusManifest& m) {
  nlohmann::ordered_json j;
  j["schema_version"] = kManifestVersion;
  j["note"] = "alignment offsets, rates and kinematic ranges in the recipe are generator assumptions";
  j["recipe"] = to_json(m.recipe);
  auto recs = nlohmann::ordered_json::array();
  for (const auto& e : m.recordings) {
    recs.push_back({{"id", e.id},
                    {"speaker", e.speaker},
                    {"audio", e.audio},
                    {"trajectory", e.trajectory},
                    {"reference", e.reference},
                    {"accents", e.accents},
                    {"duration_s", e.duration_s},
                    {"n_phonemes", e.n_phonemes}});
  }
  j["recordings"] = recs;
  return j;
}

inline void write_manifest(const std::filesystem::path& dir, const CorpusManifest& m) {
  write_file_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

inline CorpusManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, path.string() + " not found");
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    CorpusManifest m;
    m.recipe = recipe_from_json(j.at("recipe"));
    for (const auto& r : j.at("recordings")) {
      ManifestEntry e;
      e.id = r.at("id").get<std::string>();
      e.speaker = r.at("speaker").get<int>();
      e.audio = r.at("audio").get<std::string>();
      e.trajectory = r.at("trajectory").get<std::string>();
      e.reference = r.value("reference", std::string{});
      e.accents = r.value("accents", std::string{});
      e.duration_s = r.value("duration_s", 0.0);
      e.n_phonemes = r.value("n_phonemes", std::size_t{0});
      m.recordings.push_back(e);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRow, path.string() + ": " + e.what());
  }
}

}  // namespace prosogest
