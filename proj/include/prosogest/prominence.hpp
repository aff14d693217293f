// prosogest/prominence.hpp
//
// Accent features per voiced segment, Yeo-Johnson normalization, and the
// per-speaker prominence model: a 3-D Gaussian over transformed features with
// a Mahalanobis threshold. Prominent segments sit in the tail (d^2 at or above
// the threshold).

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "prosogest/error.hpp"
#include "prosogest/gaussian.hpp"
#include "prosogest/gradient.hpp"
#include "prosogest/json_util.hpp"
#include "prosogest/pitch.hpp"
#include "prosogest/signal_io.hpp"

namespace prosogest {

struct AccentFeatures {
  double xi_max = 0.0;       // Hz*s: pause * (max F0 - previous contour's last F0)
  double xi_min = 0.0;       // Hz*s: same with the minimum F0
  double xi_dot_max = 0.0;   // Hz/s, magnitude of the steepest smoothed gradient
  double xi_dot_time = 0.0;  // s, where that gradient occurs
  std::size_t segment_ref = 0;

  Eigen::Vector3d vector() const { return {xi_max, xi_min, xi_dot_max}; }
};

/// Steepest F0 gradient of a segment. Segments shorter than three frames fall
/// back to a plain difference (two frames) or zero (one frame).
inline GradientPeak segment_gradient(const F0Segment& seg, double hop,
                                     double sigma = kPitchGradientSigma) {
  const auto& s = seg.samples;
  if (s.size() >= 3) {
    std::vector<double> f0(s.size());
    std::transform(s.begin(), s.end(), f0.begin(), [](const ContourSample& c) { return c.f0; });
    return max_gradient(f0, s.front().t, hop, sigma);
  }
  if (s.size() == 2) return {std::abs(s[1].f0 - s[0].f0) / hop, s[0].t};
  return {0.0, s.empty() ? seg.start : s[0].t};
}

/// Segments must be time-ordered. The first segment's pause runs from
/// `stream_start`, and with no previous contour its F0 differential is taken
/// against its own first frame.
inline std::vector<AccentFeatures> compute_accents(std::span<const F0Segment> segments,
                                                   double stream_start, double hop,
                                                   double sigma = kPitchGradientSigma) {
  std::vector<AccentFeatures> out;
  out.reserve(segments.size());
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& cur = segments[k];
    const double pause = k == 0 ? cur.start - stream_start : cur.start - segments[k - 1].end;
    const double ref_f0 = k == 0 ? cur.f0_first : segments[k - 1].f0_last;
    AccentFeatures a;
    a.xi_max = pause * (cur.f0_max - ref_f0);
    a.xi_min = pause * (cur.f0_min - ref_f0);
    const auto g = segment_gradient(cur, hop, sigma);
    a.xi_dot_max = g.magnitude;
    a.xi_dot_time = g.time;
    a.segment_ref = k;
    out.push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Yeo-Johnson

/// psi(y; lambda). expm1/log1p keep the lambda -> 0 and lambda -> 2 limits
/// continuous to rounding error.
inline double yeo_johnson(double y, double lambda) {
  if (y >= 0.0) {
    if (lambda == 0.0) return std::log1p(y);
    return std::expm1(lambda * std::log1p(y)) / lambda;
  }
  if (lambda == 2.0) return -std::log1p(-y);
  return -std::expm1((2.0 - lambda) * std::log1p(-y)) / (2.0 - lambda);
}

struct YeoJohnsonTransform {
  Eigen::VectorXd lambda;

  Eigen::VectorXd apply(const Eigen::VectorXd& y) const {
    if (y.size() != lambda.size()) {
      throw Error(ErrorCode::DimensionMismatch, "Yeo-Johnson input dimension");
    }
    Eigen::VectorXd out(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = yeo_johnson(y[i], lambda[i]);
    return out;
  }

  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const {
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (Eigen::Index r = 0; r < rows.rows(); ++r) out.row(r) = apply(rows.row(r).transpose()).transpose();
    return out;
  }
};

/// Profile log-likelihood of lambda for one column: Gaussian fit to the
/// transformed sample plus the log-Jacobian of the transform.
inline double yeo_johnson_log_likelihood(std::span<const double> y, double lambda) {
  const double n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += yeo_johnson(v, lambda);
  mean /= n;
  double ss = 0.0;
  double jac = 0.0;
  for (double v : y) {
    const double d = yeo_johnson(v, lambda) - mean;
    ss += d * d;
    jac += std::copysign(std::log1p(std::abs(v)), v);
  }
  const double var = ss / n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jac;
}

inline constexpr double kLambdaMin = -2.0;
inline constexpr double kLambdaMax = 2.0;
inline constexpr double kLambdaStep = 0.01;

/// Per column, lambda on the grid [-2, 2] step 0.01 maximizing the profile
/// log-likelihood (first maximum wins).
inline YeoJohnsonTransform fit_yeo_johnson(const Eigen::MatrixXd& data) {
  if (data.rows() < 10) {
    throw Error(ErrorCode::InsufficientData,
                std::to_string(data.rows()) + " rows (need at least 10)");
  }
  YeoJohnsonTransform t;
  t.lambda.resize(data.cols());
  const int steps = static_cast<int>(std::lround((kLambdaMax - kLambdaMin) / kLambdaStep));
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const Eigen::VectorXd col = data.col(c);
    if (col.maxCoeff() == col.minCoeff()) {
      throw Error(ErrorCode::DegenerateDimension,
                  "column " + std::to_string(c) + " has zero variance");
    }
    const std::span<const double> y(col.data(), static_cast<std::size_t>(col.size()));
    double best_ll = -std::numeric_limits<double>::infinity();
    double best_lambda = 1.0;
    for (int k = 0; k <= steps; ++k) {
      const double lambda = kLambdaMin + k * kLambdaStep;
      const double ll = yeo_johnson_log_likelihood(y, lambda);
      if (ll > best_ll) {
        best_ll = ll;
        best_lambda = lambda;
      }
    }
    t.lambda[c] = best_lambda;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Prominence model

inline constexpr double kDefaultProminenceThreshold = 0.9;
inline constexpr double kDefaultMissRate = 0.02;

struct ProminenceModel {
  YeoJohnsonTransform transform;
  GaussianModel gaussian;
  double threshold_d2 = kDefaultProminenceThreshold;
  std::string speaker_id;

  double d2(const AccentFeatures& f) const {
    return gaussian.mahalanobis_d2(transform.apply(f.vector()));
  }
};

/// Inclusive boundary: d^2 == threshold is prominent.
inline bool is_prominent_d2(double d2, double threshold_d2) { return d2 >= threshold_d2; }

inline bool classify_prominent(const AccentFeatures& f, const ProminenceModel& model) {
  return is_prominent_d2(model.d2(f), model.threshold_d2);
}

inline Eigen::MatrixXd accent_matrix(std::span<const AccentFeatures> features) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(features.size()), 3);
  for (std::size_t i = 0; i < features.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = features[i].vector().transpose();
  }
  return m;
}

/// Transform and Gaussian fitted on the pooled features of one speaker; the
/// threshold is left at `threshold_d2` for calibrate_threshold to replace.
inline ProminenceModel fit_prominence(std::span<const AccentFeatures> features,
                                      std::string speaker_id,
                                      double threshold_d2 = kDefaultProminenceThreshold) {
  const Eigen::MatrixXd raw = accent_matrix(features);
  ProminenceModel m;
  m.transform = fit_yeo_johnson(raw);
  m.gaussian = fit_gaussian(m.transform.apply_rows(raw));
  m.threshold_d2 = threshold_d2;
  m.speaker_id = std::move(speaker_id);
  return m;
}

/// Largest threshold whose miss rate over the positives (d^2 strictly below
/// threshold) stays within `target_miss_rate`.
inline double calibrate_threshold(std::vector<double> positive_d2, double target_miss_rate) {
  if (positive_d2.empty()) throw Error(ErrorCode::NoPositiveLabels, "no prominent samples");
  if (!(target_miss_rate > 0.0 && target_miss_rate < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "target miss rate must lie in (0, 0.5)");
  }
  std::sort(positive_d2.begin(), positive_d2.end());
  const double n = static_cast<double>(positive_d2.size());
  const auto allowed = static_cast<std::size_t>(std::floor(target_miss_rate * n + 1e-9));
  return positive_d2[allowed];
}

struct LabeledAccent {
  AccentFeatures features;
  bool is_prominent = false;
};

inline double calibrate_threshold(std::span<const LabeledAccent> labeled, const ProminenceModel& model,
                                  double target_miss_rate = kDefaultMissRate) {
  std::vector<double> d2;
  for (const auto& l : labeled) {
    if (l.is_prominent) d2.push_back(model.d2(l.features));
  }
  return calibrate_threshold(std::move(d2), target_miss_rate);
}

// ---------------------------------------------------------------------------
// Persistence: {lambda[3], mean[3], cov[3][3], threshold_d2, speaker_id}

inline nlohmann::ordered_json to_json(const ProminenceModel& m) {
  nlohmann::ordered_json j;
  j["lambda"] = std::vector<double>(m.transform.lambda.data(),
                                    m.transform.lambda.data() + m.transform.lambda.size());
  const auto& mu = m.gaussian.mean();
  j["mean"] = std::vector<double>(mu.data(), mu.data() + mu.size());
  auto cov = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.gaussian.dim(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.gaussian.dim()));
    for (Eigen::Index c = 0; c < m.gaussian.dim(); ++c) row[static_cast<std::size_t>(c)] = m.gaussian.covariance()(r, c);
    cov.push_back(row);
  }
  j["cov"] = cov;
  j["threshold_d2"] = m.threshold_d2;
  j["speaker_id"] = m.speaker_id;
  return j;
}

inline ProminenceModel prominence_from_json(const nlohmann::json& j) {
  try {
    ProminenceModel m;
    m.transform.lambda = detail::vector_from_json(j.at("lambda"), 3, "lambda");
    m.gaussian = GaussianModel(detail::vector_from_json(j.at("mean"), 3, "mean"),
                               detail::matrix_from_json(j.at("cov"), 3, "cov"));
    m.threshold_d2 = j.at("threshold_d2").get<double>();
    if (!(m.threshold_d2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold_d2 must be positive");
    m.speaker_id = j.at("speaker_id").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("prominence model: ") + e.what());
  }
}

inline void save_prominence(const std::filesystem::path& path, const ProminenceModel& m) {
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

inline ProminenceModel load_prominence(const std::filesystem::path& path) {
  try {
    return prominence_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

}  // namespace prosogest
