// prosogest/cooccur.hpp
//
// Speech-gesture alignment features t = [tau_0, tau_max, tau_min, tau_max']
// per phoneme interval, and the per-class co-occurrence model that turns t
// into a class prior.
//
// All taus are speech-event time minus gesture-event time. tau_0 is the
// prominent segment's start minus the phoneme start.

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "prosogest/error.hpp"
#include "prosogest/gaussian.hpp"
#include "prosogest/hmm.hpp"
#include "prosogest/json_util.hpp"
#include "prosogest/kinematics.hpp"
#include "prosogest/phoneme.hpp"
#include "prosogest/pitch.hpp"
#include "prosogest/prominence.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

inline constexpr int kAlignmentDim = 4;

struct AlignmentFeatures {
  double tau_0 = 0.0;
  double tau_max = 0.0;
  double tau_min = 0.0;
  double tau_max_prime = 0.0;
  std::size_t n_segments = 0;

  Eigen::Vector4d vector() const { return {tau_0, tau_max, tau_min, tau_max_prime}; }
};

/// The event times of a prominent F0 segment that the alignment needs.
struct ProminentSegment {
  double start = 0.0;
  double end = 0.0;
  double t_of_max = 0.0;
  double t_of_min = 0.0;
  double gradient_time = 0.0;  // time of the steepest F0 gradient

  double duration() const { return end - start; }
};

inline ProminentSegment prominent_segment(const F0Segment& seg, const GradientPeak& grad) {
  return {seg.start, seg.end, seg.t_of_max, seg.t_of_min, grad.time};
}

/// Duration-weighted average of the per-segment offsets over every prominent
/// segment overlapping [start, end); nullopt when none does.
inline std::optional<AlignmentFeatures> compute_alignment(double start, double end, const VelocityProfile& profile,
                                                          std::span<const ProminentSegment> prominent) {
  AlignmentFeatures t;
  double weight = 0.0;
  for (const auto& s : prominent) {
    if (!(s.start < end && s.end > start)) continue;
    const double w = s.duration();
    t.tau_0 += w * (s.start - start);
    t.tau_max += w * (s.t_of_max - profile.v_peak_time);
    t.tau_min += w * (s.t_of_min - profile.v_peak_time);
    t.tau_max_prime += w * (s.gradient_time - profile.v_dot_max.time);
    weight += w;
    ++t.n_segments;
  }
  if (t.n_segments == 0) return std::nullopt;
  if (weight > 0.0) {
    t.tau_0 /= weight;
    t.tau_max /= weight;
    t.tau_min /= weight;
    t.tau_max_prime /= weight;
  }
  return t;
}

// ---------------------------------------------------------------------------

struct CooccurrenceModel {
  ClassVector pi{};  // sums to 1
  std::array<std::optional<GaussianModel>, kNumClasses> gaussians;  // empty where pi == 0
};

using LabeledAlignment = std::pair<PhonemeClass, AlignmentFeatures>;

/// Per-class Gaussians over t, with Preparation and Retraction pooled into one
/// shared Gaussian. pi is the class frequency among the samples.
inline CooccurrenceModel fit_cooccurrence(std::span<const LabeledAlignment> labeled) {
  std::array<std::vector<Eigen::Vector4d>, kNumClasses> by_class;
  for (const auto& [c, t] : labeled) by_class[index_of(c)].push_back(t.vector());
  if (labeled.empty()) throw Error(ErrorCode::InsufficientClassData, "no alignment samples");

  CooccurrenceModel m;
  const auto total = static_cast<double>(labeled.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) m.pi[c] = static_cast<double>(by_class[c].size()) / total;

  auto fit = [](const std::vector<Eigen::Vector4d>& rows, const std::string& name) {
    constexpr std::size_t need = kAlignmentDim + 2;
    if (rows.size() < need) {
      throw Error(ErrorCode::InsufficientClassData, name + ": " + std::to_string(rows.size()) +
                                                        " co-occurrence samples (need at least " +
                                                        std::to_string(need) + ")");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), kAlignmentDim);
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return fit_gaussian(x);
  };

  const auto prep = index_of(PhonemeClass::Preparation);
  const auto retr = index_of(PhonemeClass::Retraction);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (c == prep || c == retr || by_class[c].empty()) continue;
    m.gaussians[c] = fit(by_class[c], std::string(name_of(kAllClasses[c])));
  }
  std::vector<Eigen::Vector4d> pooled = by_class[prep];
  pooled.insert(pooled.end(), by_class[retr].begin(), by_class[retr].end());
  if (!pooled.empty()) {
    std::string name = "Preparation and Retraction";
    if (by_class[retr].empty()) name = "Preparation";
    if (by_class[prep].empty()) name = "Retraction";
    const auto g = fit(pooled, name);
    if (!by_class[prep].empty()) m.gaussians[prep] = g;
    if (!by_class[retr].empty()) m.gaussians[retr] = g;
  }
  return m;
}

/// P(class | t) proportional to pi * N(t); uniform over supported classes
/// when t is absent.
inline ClassVector class_prior(const std::optional<AlignmentFeatures>& t, const CooccurrenceModel& m) {
  ClassVector p{};
  if (!t) {
    double n = 0.0;
    for (double v : m.pi) n += v > 0.0 ? 1.0 : 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) p[c] = m.pi[c] > 0.0 ? 1.0 / n : 0.0;
    return p;
  }
  ClassVector logp;
  double top = kNegInf;
  const Eigen::VectorXd x = t->vector();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    logp[c] = (m.pi[c] > 0.0 && m.gaussians[c]) ? std::log(m.pi[c]) + m.gaussians[c]->log_density(x) : kNegInf;
    top = std::max(top, logp[c]);
  }
  double z = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p[c] = logp[c] == kNegInf ? 0.0 : std::exp(logp[c] - top);
    z += p[c];
  }
  for (auto& v : p) v /= z;
  return p;
}

// ---------------------------------------------------------------------------
// {classes: [{name, pi, mean[4], cov[4][4]}]}; unsupported classes carry pi 0
// and no mean/cov.

inline nlohmann::ordered_json to_json(const CooccurrenceModel& m) {
  auto classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    nlohmann::ordered_json e;
    e["name"] = std::string(name_of(kAllClasses[c]));
    e["pi"] = m.pi[c];
    if (m.gaussians[c]) {
      e["mean"] = detail::to_std(m.gaussians[c]->mean());
      e["cov"] = detail::to_rows(m.gaussians[c]->covariance());
    }
    classes.push_back(e);
  }
  nlohmann::ordered_json j;
  j["classes"] = classes;
  return j;
}

inline CooccurrenceModel cooccurrence_from_json(const nlohmann::json& j) {
  try {
    CooccurrenceModel m;
    for (const auto& e : j.at("classes")) {
      const auto name = e.at("name").get<std::string>();
      const auto c = parse_class(name);
      if (!c) throw Error(ErrorCode::InvalidArgument, "cooccurrence: unknown class '" + name + "'");
      m.pi[index_of(*c)] = e.at("pi").get<double>();
      if (e.contains("mean")) {
        m.gaussians[index_of(*c)] = GaussianModel(detail::vector_from_json(e.at("mean"), kAlignmentDim, "mean"),
                                                  detail::matrix_from_json(e.at("cov"), kAlignmentDim, "cov"));
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("cooccurrence: ") + e.what());
  }
}

inline void save_cooccurrence(const std::filesystem::path& path, const CooccurrenceModel& m) {
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

inline CooccurrenceModel load_cooccurrence(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingModel, path.string() + " not found");
  try {
    return cooccurrence_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

}  // namespace prosogest
