// prosogest/fusion.hpp
//
// Interval-level Bayes fusion of HMM likelihoods with co-occurrence priors,
// and segmentation scoring.
//
// Both recognition modes share one path: decoder boundaries, then each
// interval relabelled to argmax log p(g|c) + log P(c). Gesture-only mode uses
// a uniform prior, so any difference between the modes comes from the prior.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "prosogest/decoder.hpp"
#include "prosogest/hmm.hpp"
#include "prosogest/phoneme.hpp"

namespace prosogest {

enum class FusionMode { GestureOnly, Fused };

inline std::string mode_name(FusionMode m) { return m == FusionMode::Fused ? "fused" : "gesture_only"; }

struct IntervalScores {
  double start_s = 0.0;
  double end_s = 0.0;
  ClassVector log_likelihood{};  // per class, kNegInf when infeasible
  ClassVector prior{};           // probability vector
};

/// Relabel every interval to the class maximizing log-likelihood plus log
/// prior (first class on ties). A zero prior is log 0 and never wins.
inline Segmentation fuse_posteriors(std::span<const IntervalScores> intervals) {
  Segmentation out;
  out.reserve(intervals.size());
  for (const auto& iv : intervals) {
    ClassVector score;
    std::size_t best = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      score[c] = iv.prior[c] > 0.0 ? iv.log_likelihood[c] + std::log(iv.prior[c]) : kNegInf;
      if (score[c] > score[best]) best = c;
    }
    double z = kNegInf;
    for (double s : score) z = log_sum_exp(z, s);
    SegmentInterval s;
    s.start_s = iv.start_s;
    s.end_s = iv.end_s;
    s.label = kAllClasses[best];
    s.log_likelihood = iv.log_likelihood[best];
    s.prior = iv.prior[best];
    s.posterior = z == kNegInf ? 0.0 : std::exp(score[best] - z);
    out.push_back(s);
  }
  return out;
}

/// Relabelling can put two intervals of a class that may not follow itself
/// (Preparation, Hold, Retraction under the default grammar) side by side;
/// those are merged. Merged intervals sum their log-likelihoods and keep the
/// prior and posterior of the longer part.
inline Segmentation consolidate(const Segmentation& seg, const Grammar& grammar) {
  Segmentation out;
  for (const auto& s : seg) {
    if (!out.empty() && out.back().label == s.label && !grammar[index_of(s.label)][index_of(s.label)]) {
      auto& b = out.back();
      if (s.duration() > b.duration()) {
        b.prior = s.prior;
        b.posterior = s.posterior;
      }
      b.end_s = s.end_s;
      b.log_likelihood += s.log_likelihood;
      continue;
    }
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

struct ErrorBreakdown {
  long n_reference = 0;
  long hits = 0;
  long deletions = 0;
  long substitutions = 0;
  long insertions = 0;

  double pct(long v) const { return n_reference > 0 ? 100.0 * static_cast<double>(v) / static_cast<double>(n_reference) : 0.0; }
  double hits_pct() const { return pct(hits); }
  double deletion_pct() const { return pct(deletions); }
  double substitution_pct() const { return pct(substitutions); }
  double insertion_pct() const { return pct(insertions); }

  ErrorBreakdown& operator+=(const ErrorBreakdown& o) {
    n_reference += o.n_reference;
    hits += o.hits;
    deletions += o.deletions;
    substitutions += o.substitutions;
    insertions += o.insertions;
    return *this;
  }
  bool operator==(const ErrorBreakdown&) const = default;
};

inline constexpr double kMatchOverlap = 0.5;

/// One-to-one matching: a reference and a hypothesis interval are eligible
/// when their overlap covers at least half of each. Eligible pairs are taken
/// greedily by overlap (longest first, then earliest reference).
inline ErrorBreakdown score(const Segmentation& hyp, const Segmentation& ref) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  std::size_t h0 = 0;
  for (std::size_t r = 0; r < ref.size(); ++r) {
    while (h0 < hyp.size() && hyp[h0].end_s <= ref[r].start_s) ++h0;
    for (std::size_t h = h0; h < hyp.size() && hyp[h].start_s < ref[r].end_s; ++h) {
      const double ov = std::min(hyp[h].end_s, ref[r].end_s) - std::max(hyp[h].start_s, ref[r].start_s);
      if (ov >= kMatchOverlap * ref[r].duration() - 1e-9 && ov >= kMatchOverlap * hyp[h].duration() - 1e-9) {
        pairs.emplace_back(ov, r, h);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<char> ref_used(ref.size(), 0), hyp_used(hyp.size(), 0);
  ErrorBreakdown e;
  e.n_reference = static_cast<long>(ref.size());
  for (const auto& [ov, r, h] : pairs) {
    if (ref_used[r] || hyp_used[h]) continue;
    ref_used[r] = hyp_used[h] = 1;
    (ref[r].label == hyp[h].label ? e.hits : e.substitutions)++;
  }
  e.deletions = e.n_reference - e.hits - e.substitutions;
  e.insertions = static_cast<long>(hyp.size()) - e.hits - e.substitutions;
  return e;
}

inline nlohmann::ordered_json report_json(FusionMode mode, const ErrorBreakdown& e) {
  nlohmann::ordered_json j;
  j["mode"] = mode_name(mode);
  j["hits_pct"] = e.hits_pct();
  j["deletion_pct"] = e.deletion_pct();
  j["substitution_pct"] = e.substitution_pct();
  j["insertion_pct"] = e.insertion_pct();
  j["n_reference"] = e.n_reference;
  return j;
}

}  // namespace prosogest
