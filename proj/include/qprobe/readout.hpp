#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"

namespace qprobe {

inline constexpr double kDefaultLambda = 1e-6;

/// Affine readout y = w . z(x) + b on z-scored features.
struct ReadoutModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double lambda = kDefaultLambda;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;  // constant features carry std 1 and weight 0
  ObservableKind target = ObservableKind::TrA2;

  Eigen::Index dim() const { return weights.size(); }
};

struct Metrics {
  double mape = 0.0;
  double pearson_r = 0.0;
  std::size_t n_samples = 0;
};

namespace detail {

inline void require_all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) throw ParameterError(std::string(what) + ": non-finite entries");
}

inline bool is_constant_feature(double std_dev, double mean) {
  return std_dev <= 1e-12 * std::max(1.0, std::abs(mean));
}

}  // namespace detail

/// Ridge regression with an unpenalised bias.
///
/// Features are standardised with training statistics and targets centred, then
/// (Z^T Z + lambda I) w = Z^T (y - mean(y)) is solved by Cholesky with two
/// rounds of iterative refinement; the bias is mean(y). Constant columns are
/// left out of the solve and get weight 0.
inline ReadoutModel fit_ridge(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double lambda,
                              ObservableKind target = ObservableKind::TrA2) {
  const Eigen::Index rows = features.rows();
  const Eigen::Index dim = features.cols();
  if (rows < 1) throw ParameterError("fit_ridge: no training rows");
  if (targets.size() != rows)
    throw ParameterError("fit_ridge: " + std::to_string(rows) + " feature rows but " +
                         std::to_string(targets.size()) + " targets");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("fit_ridge: lambda must be finite and >= 0");
  detail::require_all_finite(features, "fit_ridge features");
  detail::require_all_finite(targets, "fit_ridge targets");

  ReadoutModel model;
  model.lambda = lambda;
  model.target = target;
  model.feature_mean = features.colwise().mean().transpose();
  model.feature_std.resize(dim);
  model.weights = Eigen::VectorXd::Zero(dim);

  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double sd = std::sqrt((features.col(j).array() - model.feature_mean(j)).square().mean());
    if (detail::is_constant_feature(sd, model.feature_mean(j))) {
      model.feature_std(j) = 1.0;
    } else {
      model.feature_std(j) = sd;
      active.push_back(j);
    }
  }

  const double y_mean = targets.mean();
  model.bias = y_mean;
  if (active.empty()) return model;

  const auto k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd z(rows, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto j = active[static_cast<std::size_t>(c)];
    z.col(c) = (features.col(j).array() - model.feature_mean(j)) / model.feature_std(j);
  }
  const Eigen::VectorXd yc = targets.array() - y_mean;

  Eigen::MatrixXd gram = z.transpose() * z;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = z.transpose() * yc;

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || (lambda == 0.0 && llt.rcond() < 1e-13))
    throw NumericalError("fit_ridge: normal equations are singular; use lambda > 0");

  Eigen::VectorXd w = llt.solve(rhs);
  for (int pass = 0; pass < 2; ++pass) w += llt.solve(rhs - gram * w);
  if (!w.allFinite()) throw NumericalError("fit_ridge: solve produced non-finite weights");

  for (Eigen::Index c = 0; c < k; ++c) model.weights(active[static_cast<std::size_t>(c)]) = w(c);
  return model;
}

inline Eigen::VectorXd standardize(const ReadoutModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return (x - m.feature_mean).cwiseQuotient(m.feature_std);
}

inline double predict(const ReadoutModel& m, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != m.dim())
    throw ParameterError("predict: feature vector has length " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(m.dim()));
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return m.weights.dot(standardize(m, v)) + m.bias;
}

inline Eigen::VectorXd predict(const ReadoutModel& m, const Eigen::MatrixXd& rows) {
  if (rows.cols() != m.dim())
    throw ParameterError("predict: feature matrix has " + std::to_string(rows.cols()) + " columns, model expects " +
                         std::to_string(m.dim()));
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) out(r) = m.weights.dot(standardize(m, rows.row(r).transpose())) + m.bias;
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

inline constexpr double kMapeGuard = 1e-12;

/// Mean absolute percentage error, in percent.
inline double mape(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw ParameterError("mape: length mismatch");
  if (truth.empty()) throw MetricError("mape: empty input");
  double acc = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (std::abs(truth[k]) <= kMapeGuard) throw MetricError("mape: undefined for zero target at index " + std::to_string(k));
    acc += std::abs((pred[k] - truth[k]) / truth[k]);
  }
  return 100.0 * acc / static_cast<double>(truth.size());
}

/// Population covariance over the product of population standard deviations.
inline double pearson(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw ParameterError("pearson: length mismatch");
  if (truth.size() < 2) throw MetricError("pearson: need at least two samples");
  const double n = static_cast<double>(truth.size());
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  double cov = 0.0, vt = 0.0, vp = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double a = truth[k] - mt, b = pred[k] - mp;
    cov += a * b;
    vt += a * a;
    vp += b * b;
  }
  if (vt <= 0.0 || vp <= 0.0) throw MetricError("pearson: undefined for a constant vector");
  return std::clamp(cov / std::sqrt(vt * vp), -1.0, 1.0);
}

/// Ranks starting at 1, ties receive their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return pearson(ra, rb);
}

inline Metrics evaluate(std::span<const double> truth, std::span<const double> pred) {
  return Metrics{mape(truth, pred), pearson(truth, pred), truth.size()};
}

// ---------------------------------------------------------------------------
// Cross-validated lambda

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{1e-10, 1e-8, 1e-6, 1e-4, 1e-2};
  return grid;
}

/// K-fold (contiguous folds, in row order) selection of lambda by mean squared
/// validation error; the returned model is refit on all rows.
inline ReadoutModel fit_ridge_cv(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                 ObservableKind target = ObservableKind::TrA2,
                                 const std::vector<double>& grid = default_lambda_grid(), int folds = 5) {
  const Eigen::Index rows = features.rows();
  if (grid.empty()) throw ParameterError("fit_ridge_cv: empty lambda grid");
  if (folds < 2 || rows < folds) throw ParameterError("fit_ridge_cv: need at least `folds` rows and folds >= 2");
  double best_lambda = grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double sse = 0.0;
    for (int f = 0; f < folds; ++f) {
      const Eigen::Index lo = rows * f / folds, hi = rows * (f + 1) / folds;
      Eigen::MatrixXd xtr(rows - (hi - lo), features.cols());
      Eigen::VectorXd ytr(rows - (hi - lo));
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (i >= lo && i < hi) continue;
        xtr.row(r) = features.row(i);
        ytr(r++) = targets(i);
      }
      const auto m = fit_ridge(xtr, ytr, lambda, target);
      const Eigen::VectorXd p = predict(m, Eigen::MatrixXd(features.middleRows(lo, hi - lo)));
      sse += (p - targets.segment(lo, hi - lo)).squaredNorm();
    }
    if (sse < best_err) {
      best_err = sse;
      best_lambda = lambda;
    }
  }
  return fit_ridge(features, targets, best_lambda, target);
}

}  // namespace qprobe
