// prosogest/gaussian.hpp
//
// Full-covariance multivariate Gaussian shared by the prominence model (3-D
// accent features) and the per-class co-occurrence models (4-D alignment
// features). All quadratic forms go through a cached Cholesky factor.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "prosogest/error.hpp"

namespace prosogest {

class GaussianModel {
 public:
  GaussianModel() = default;

  GaussianModel(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
      : mean_(std::move(mean)), cov_(std::move(covariance)) {
    if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "covariance must be " + std::to_string(mean_.size()) + "x" +
                      std::to_string(mean_.size()));
    }
    const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      throw Error(ErrorCode::InvalidArgument, "covariance is not symmetric");
    }
    cov_ = 0.5 * (cov_ + cov_.transpose());
    llt_.compute(cov_);
    if (llt_.info() != Eigen::Success) {
      throw Error(ErrorCode::InvalidArgument,
                  "covariance is not positive definite");
    }
    const Eigen::VectorXd diag = llt_.matrixLLT().diagonal();
    log_det_ = 2.0 * diag.array().log().sum();
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  double log_det() const { return log_det_; }

  /// (x - mu)^T Sigma^{-1} (x - mu) by forward substitution against L.
  double mahalanobis_d2(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "vector has dim " + std::to_string(x.size()) +
                      ", model has dim " + std::to_string(dim()));
    }
    const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
    return z.squaredNorm();
  }

  double log_density(const Eigen::VectorXd& x) const {
    const double d = static_cast<double>(dim());
    return -0.5 * (mahalanobis_d2(x) + log_det_ +
                   d * std::log(2.0 * std::numbers::pi));
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
};

inline double mahalanobis_d2(const Eigen::VectorXd& f, const GaussianModel& g) {
  return g.mahalanobis_d2(f);
}

inline constexpr double kRidgeConditionLimit = 1e-9;

/// Sample mean and unbiased covariance of the rows of `data`. A ridge
/// eps*I with eps = 1e-6 * trace / dim is added when the sample covariance is
/// near-singular (smallest/largest eigenvalue below kRidgeConditionLimit).
/// Well-conditioned fits stay unregularized so d^2 is affine invariant.
inline GaussianModel fit_gaussian(const Eigen::MatrixXd& data) {
  const Eigen::Index n = data.rows();
  const Eigen::Index dim = data.cols();
  if (dim == 0 || n <= dim) {
    throw Error(ErrorCode::InsufficientData,
                std::to_string(n) + " rows for a " + std::to_string(dim) +
                    "-dimensional Gaussian (need more rows than dimensions)");
  }
  const Eigen::VectorXd mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double eps = 1e-6 * cov.trace() / static_cast<double>(dim);
  if (!(eps > 0.0)) {
    throw Error(ErrorCode::DegenerateDimension, "sample has zero variance");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > kRidgeConditionLimit * ev.maxCoeff())) {
    cov.diagonal().array() += eps;
  }
  return GaussianModel(mean, cov);
}

}  // namespace prosogest
