#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "qprobe/probe.hpp"
#include "qprobe/readout.hpp"

using namespace qprobe;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = uniform01(rng) * 2.0 - 1.0;
  return m;
}

/// Realistic, strongly collinear design: probe features of random graphs.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> probe_design(int rows, std::uint64_t seed) {
  Eigen::MatrixXd x(rows, 50);
  Eigen::VectorXd y(rows);
  ProbeConfig cfg;
  for (int r = 0; r < rows; ++r) {
    Rng rng = make_rng(seed + static_cast<std::uint64_t>(r));
    const auto g = sample_valid(50, 0.6, rng);
    const auto f = extract_features({g, 1.0, std::nullopt}, cfg);
    x.row(r) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), 50);
    y(r) = observable(g, ObservableKind::TrA2);
  }
  return {x, y};
}

/// Rebuilds the standardised design from the model's stored statistics.
Eigen::MatrixXd standardised(const ReadoutModel& m, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) z.row(r) = standardize(m, x.row(r).transpose()).transpose();
  return z;
}

double stationarity_residual(const ReadoutModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd z = standardised(m, x);
  const Eigen::VectorXd yc = y.array() - y.mean();
  const Eigen::VectorXd rhs = z.transpose() * yc;
  const Eigen::VectorXd lhs = z.transpose() * (z * m.weights) + m.lambda * m.weights;
  return (lhs - rhs).norm() / rhs.norm();
}

}  // namespace

TEST(FitRidgeTest, ExactLinearFit) {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 2;
  Eigen::VectorXd y(3);
  y << 0, 1, 2;
  const auto m = fit_ridge(x, y, 0.0);
  const auto p = predict(m, x);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p(i), y(i), 1e-12);
  const std::vector<double> row{2.0};
  EXPECT_NEAR(predict(m, row), 2.0, 1e-12);
}

TEST(FitRidgeTest, ConstantTargets) {
  const auto x = random_matrix(30, 8, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(30, 0.42);
  const auto m = fit_ridge(x, y, 1e-6);
  EXPECT_LE(m.weights.norm(), 1e-8);
  EXPECT_DOUBLE_EQ(m.bias, 0.42);
}

TEST(FitRidgeTest, ResidualGrowsWithLambda) {
  const auto x = random_matrix(50, 20, 2);
  const auto y = random_matrix(50, 1, 3).col(0).eval();
  double prev = -1.0;
  for (double lambda : {1e-6, 1e-2, 1.0, 10.0}) {
    const auto m = fit_ridge(x, y, lambda);
    const double res = (predict(m, x) - y).norm();
    EXPECT_GE(res, prev - 1e-12);
    prev = res;
  }
}

TEST(FitRidgeTest, WeightNormShrinks) {
  const auto [x, y] = probe_design(60, 10);
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0}) {
    const double w = fit_ridge(x, y, lambda).weights.norm();
    EXPECT_LE(w, prev * (1 + 1e-10));
    prev = w;
  }
}

TEST(FitRidgeTest, StationarityOnRandomAndProbeDesigns) {
  const auto x = random_matrix(50, 20, 4);
  const auto y = random_matrix(50, 1, 5).col(0).eval();
  for (double lambda : {0.0, 1e-6, 1e-2})
    EXPECT_LE(stationarity_residual(fit_ridge(x, y, lambda), x, y), 1e-8);
  const auto [px, py] = probe_design(150, 200);
  for (double lambda : {1e-8, 1e-6, 1e-2})
    EXPECT_LE(stationarity_residual(fit_ridge(px, py, lambda), px, py), 1e-8) << lambda;
}

TEST(FitRidgeTest, AffineTargetEquivariance) {
  const auto [x, y] = probe_design(80, 300);
  const double a = 3.5, c = -1.25;
  const auto m1 = fit_ridge(x, y, 1e-6);
  const Eigen::VectorXd y2 = (a * y).array() + c;
  const auto m2 = fit_ridge(x, y2, 1e-6);
  const Eigen::VectorXd p1 = predict(m1, x), p2 = predict(m2, x);
  EXPECT_LE(((a * p1).array() + c - p2.array()).abs().maxCoeff(), 1e-10);
}

TEST(FitRidgeTest, ConstantFeatureGetsZeroWeight) {
  auto x = random_matrix(20, 4, 6);
  x.col(2).setConstant(0.2);
  const auto y = random_matrix(20, 1, 7).col(0).eval();
  const auto m = fit_ridge(x, y, 1e-6);
  EXPECT_EQ(m.weights(2), 0.0);
  EXPECT_EQ(m.feature_std(2), 1.0);
  EXPECT_EQ(m.weights.size(), 4);
  EXPECT_TRUE(m.weights.allFinite());
}

TEST(FitRidgeTest, Errors) {
  auto x = random_matrix(10, 3, 8);
  x.col(1) = x.col(0);
  const auto y = random_matrix(10, 1, 9).col(0).eval();
  EXPECT_THROW(fit_ridge(x, y, 0.0), NumericalError);
  EXPECT_NO_THROW(fit_ridge(x, y, 1e-6));
  EXPECT_THROW(fit_ridge(x, Eigen::VectorXd::Zero(9), 1e-6), ParameterError);
  EXPECT_THROW(fit_ridge(Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), 1e-6), ParameterError);
  EXPECT_THROW(fit_ridge(x, y, -1.0), ParameterError);
  auto bad = x;
  bad(0, 0) = std::nan("");
  EXPECT_THROW(fit_ridge(bad, y, 1e-6), ParameterError);
}

TEST(PredictTest, BiasOnlyModel) {
  ReadoutModel m;
  m.weights = Eigen::VectorXd::Zero(3);
  m.feature_mean = Eigen::VectorXd::Zero(3);
  m.feature_std = Eigen::VectorXd::Ones(3);
  m.bias = 0.37;
  EXPECT_DOUBLE_EQ(predict(m, std::vector<double>{5.0, -2.0, 0.1}), 0.37);
  EXPECT_THROW(predict(m, std::vector<double>{1.0}), ParameterError);
  EXPECT_THROW(predict(m, Eigen::MatrixXd::Zero(2, 4)), ParameterError);
}

TEST(MapeTest, Examples) {
  const std::vector<double> t{1.0, 1.0};
  EXPECT_EQ(mape(t, t), 0.0);
  EXPECT_NEAR(mape(t, std::vector<double>{1.1, 0.9}), 10.0, 1e-12);
  EXPECT_NEAR(mape(std::vector<double>{0.01}, std::vector<double>{0.02}), 100.0, 1e-12);
  EXPECT_THROW(mape(std::vector<double>{0.0, 1.0}, std::vector<double>{0.1, 1.0}), MetricError);
  EXPECT_THROW(mape(t, std::vector<double>{1.0}), ParameterError);
}

TEST(PearsonTest, Examples) {
  const std::vector<double> t{1.0, 2.0, 3.0, 5.0};
  std::vector<double> affine, neg;
  for (double v : t) {
    affine.push_back(2 * v + 3);
    neg.push_back(-v);
  }
  EXPECT_NEAR(pearson(t, affine), 1.0, 1e-15);
  EXPECT_NEAR(pearson(t, neg), -1.0, 1e-15);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}), 0.981981, 1e-6);
  EXPECT_THROW(pearson(t, std::vector<double>(4, 1.0)), MetricError);
  EXPECT_THROW(pearson(std::vector<double>{1.0}, std::vector<double>{1.0}), MetricError);
}

TEST(PearsonTest, PositiveAffineInvariance) {
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(30), b(30), a2(30), b2(30);
    const double sa = 0.1 + 10 * uniform01(rng), sb = 0.1 + 10 * uniform01(rng);
    const double ca = uniform01(rng) * 4 - 2, cb = uniform01(rng) * 4 - 2;
    for (int i = 0; i < 30; ++i) {
      a[i] = uniform01(rng);
      b[i] = a[i] + 0.3 * uniform01(rng);
      a2[i] = sa * a[i] + ca;
      b2[i] = sb * b[i] + cb;
    }
    EXPECT_NEAR(pearson(a, b), pearson(a2, b2), 1e-12);
  }
}

TEST(SpearmanTest, RanksWithTies) {
  EXPECT_EQ(average_ranks(std::vector<double>{3, 1, 3, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 8, 27, 64}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-15);
}

TEST(FitRidgeCvTest, ChoosesFromGrid) {
  const auto [x, y] = probe_design(60, 500);
  const auto m = fit_ridge_cv(x, y);
  const auto& grid = default_lambda_grid();
  EXPECT_NE(std::find(grid.begin(), grid.end(), m.lambda), grid.end());
  EXPECT_THROW(fit_ridge_cv(x.topRows(3), y.head(3)), ParameterError);
}
