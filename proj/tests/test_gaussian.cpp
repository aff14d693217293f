#include <random>

#include <gtest/gtest.h>

#include "prosogest/gaussian.hpp"

namespace pg = prosogest;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

MatrixXd seeded_normal_rows(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd m(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = nd(rng);
  return m;
}

}  // namespace

TEST(FitGaussian, MeanIsMidpointOfSymmetricSample) {
  MatrixXd rows(4, 3);
  rows << 0, 0, 0, 2, 2, 2, 0, 0, 0, 2, 2, 2;
  const auto g = pg::fit_gaussian(rows);
  EXPECT_TRUE(g.mean().isApprox(Vector3d(1, 1, 1)));
}

TEST(FitGaussian, StandardNormalSample) {
  const MatrixXd rows = seeded_normal_rows(100, 3, 7);
  const auto g = pg::fit_gaussian(rows);

  // Independent mean/covariance by explicit loops.
  VectorXd mean = VectorXd::Zero(3);
  for (int i = 0; i < 100; ++i) mean += rows.row(i).transpose();
  mean /= 100.0;
  MatrixXd cov = MatrixXd::Zero(3, 3);
  for (int i = 0; i < 100; ++i) {
    const VectorXd d = rows.row(i).transpose() - mean;
    cov += d * d.transpose();
  }
  cov /= 99.0;

  EXPECT_TRUE(g.mean().isApprox(mean, 1e-12));
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(g.covariance()(j, j), cov(j, j), 1e-12);
    EXPECT_GE(g.covariance()(j, j), 0.5);
    EXPECT_LE(g.covariance()(j, j), 1.5);
  }
  EXPECT_LT(g.mean().norm(), 0.5);
}

TEST(FitGaussian, RowsNotExceedingDimIsInsufficient) {
  const MatrixXd rows = seeded_normal_rows(3, 3, 1);
  try {
    pg::fit_gaussian(rows);
    FAIL();
  } catch (const pg::Error& e) {
    EXPECT_EQ(e.code(), pg::ErrorCode::InsufficientData);
  }
}

TEST(FitGaussian, RegularizationMakesRankDeficientSamplePositiveDefinite) {
  // All rows on a line: sample covariance has rank 1.
  MatrixXd rows(6, 3);
  for (int i = 0; i < 6; ++i) rows.row(i) = Vector3d(i, 2 * i, -i).transpose();
  const auto g = pg::fit_gaussian(rows);
  EXPECT_TRUE(std::isfinite(g.mahalanobis_d2(Vector3d(0, 0, 0))));
  // ridge = 1e-6 * trace / dim on top of the rank-1 sample covariance
  const double trace = (1.0 + 4.0 + 1.0) * 3.5;
  EXPECT_NEAR(g.covariance()(0, 0), 3.5 + 1e-6 * trace / 3.0, 1e-12);
}

TEST(Mahalanobis, HandCases) {
  const pg::GaussianModel unit(Vector3d(1, 2, 3), Eigen::Matrix3d::Identity());
  EXPECT_EQ(pg::mahalanobis_d2(Vector3d(1, 2, 3), unit), 0.0);
  EXPECT_DOUBLE_EQ(pg::mahalanobis_d2(Vector3d(2, 2, 3), unit), 1.0);

  Eigen::Matrix3d diag = Eigen::Matrix3d::Zero();
  diag.diagonal() << 4, 1, 1;
  const pg::GaussianModel scaled(Vector3d::Zero(), diag);
  EXPECT_DOUBLE_EQ(pg::mahalanobis_d2(Vector3d(2, 0, 0), scaled), 1.0);
}

TEST(Mahalanobis, DimensionMismatch) {
  const pg::GaussianModel unit(Vector3d::Zero(), Eigen::Matrix3d::Identity());
  try {
    pg::mahalanobis_d2(Eigen::Vector2d(0, 0), unit);
    FAIL();
  } catch (const pg::Error& e) {
    EXPECT_EQ(e.code(), pg::ErrorCode::DimensionMismatch);
  }
}

TEST(Mahalanobis, AffineInvariance) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const MatrixXd x = seeded_normal_rows(50, 3, seed);
    std::mt19937_64 rng(seed * 977);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Eigen::Matrix3d a;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a(i, j) = u(rng);
    a.diagonal().array() += 3.0;  // keep A well away from singular
    const Vector3d b(u(rng), u(rng), u(rng));
    const MatrixXd y = (x * a.transpose()).rowwise() + b.transpose();

    const auto gx = pg::fit_gaussian(x);
    const auto gy = pg::fit_gaussian(y);
    for (int i = 0; i < 50; ++i) {
      const double dx = gx.mahalanobis_d2(x.row(i).transpose());
      const double dy = gy.mahalanobis_d2(y.row(i).transpose());
      EXPECT_NEAR(dy, dx, 1e-8 * std::max(1.0, dx)) << "seed " << seed << " row " << i;
    }
  }
}

TEST(GaussianModel, LogDensityMatchesClosedFormForDiagonal) {
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  cov.diagonal() << 0.25, 4.0;
  const pg::GaussianModel g(Eigen::Vector2d(1, -1), cov);
  const Eigen::Vector2d x(1.5, 1.0);
  auto log_n = [](double v, double m, double var) {
    return -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * (v - m) * (v - m) / var;
  };
  EXPECT_NEAR(g.log_density(x), log_n(1.5, 1, 0.25) + log_n(1.0, -1, 4.0), 1e-12);
}

TEST(GaussianModel, RejectsNonPositiveDefinite) {
  Eigen::Matrix2d cov;
  cov << 1, 2, 2, 1;
  EXPECT_THROW(pg::GaussianModel(Eigen::Vector2d::Zero(), cov), pg::Error);
}
