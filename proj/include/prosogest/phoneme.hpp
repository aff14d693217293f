// prosogest/phoneme.hpp
//
// Gesture phoneme inventory and the segmentation carrier shared by the
// decoder, the fusion stage, scoring, and the JSON-lines writers.

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prosogest {

enum class PhonemeClass {
  Preparation = 0,
  PointStroke = 1,
  ContourStroke = 2,
  CircleStroke = 3,
  Hold = 4,
  Retraction = 5,
};

inline constexpr std::size_t kNumClasses = 6;

inline constexpr std::array<PhonemeClass, kNumClasses> kAllClasses = {
    PhonemeClass::Preparation,   PhonemeClass::PointStroke,
    PhonemeClass::ContourStroke, PhonemeClass::CircleStroke,
    PhonemeClass::Hold,          PhonemeClass::Retraction,
};

inline constexpr std::size_t index_of(PhonemeClass c) {
  return static_cast<std::size_t>(c);
}

inline constexpr bool is_stroke(PhonemeClass c) {
  return c == PhonemeClass::PointStroke || c == PhonemeClass::ContourStroke ||
         c == PhonemeClass::CircleStroke;
}

inline std::string_view name_of(PhonemeClass c) {
  switch (c) {
    case PhonemeClass::Preparation: return "Preparation";
    case PhonemeClass::PointStroke: return "PointStroke";
    case PhonemeClass::ContourStroke: return "ContourStroke";
    case PhonemeClass::CircleStroke: return "CircleStroke";
    case PhonemeClass::Hold: return "Hold";
    case PhonemeClass::Retraction: return "Retraction";
  }
  return "?";
}

inline std::optional<PhonemeClass> parse_class(std::string_view name) {
  for (auto c : kAllClasses) {
    if (name_of(c) == name) return c;
  }
  return std::nullopt;
}

/// Per-class vector indexed by index_of(PhonemeClass).
using ClassVector = std::array<double, kNumClasses>;

struct SegmentInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  PhonemeClass label = PhonemeClass::Hold;
  double log_likelihood = 0.0;
  double prior = 1.0;
  double posterior = 1.0;

  double duration() const { return end_s - start_s; }
};

using Segmentation = std::vector<SegmentInterval>;

/// True iff intervals are ordered, non-empty, and each starts where the
/// previous one ends (within `tol`).
inline bool tiles(const Segmentation& seg, double tol = 1e-9) {
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (!(seg[i].end_s > seg[i].start_s)) return false;
    if (i > 0 && std::abs(seg[i].start_s - seg[i - 1].end_s) > tol) return false;
  }
  return true;
}

}  // namespace prosogest
