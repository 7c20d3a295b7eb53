#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "strategist/core.hpp"

namespace strategist {

/// Noise-free Gaussian process with a constant trend b and the correlation
/// R_ij = exp(-(x_i - x_j)^T diag(lambda) (x_i - x_j)).
///
/// The constant b and the process variance sigma2 are the closed-form
/// maximum-likelihood values for the given lambda. A small nugget is added
/// to the diagonal of R and escalated (x10) until the Cholesky factor
/// exists, up to `kMaxNugget`.
class GpModel {
 public:
  static constexpr double kMinNuggetScale = 1e-10;
  static constexpr double kMaxNugget = 1e-4;

  struct Prediction {
    double mean = 0.0;
    double sd = 0.0;
  };

  struct BatchPrediction {
    Vector mean;
    Vector sd;
  };

  static GpModel fit(const Matrix& X, const Vector& f, const Vector& lambda) {
    const Eigen::Index k = X.rows();
    if (k < 2) throw Error(ErrorCode::invalid_argument, "GP fit needs at least two samples");
    if (f.size() != k) throw Error(ErrorCode::dimension_mismatch, "X and f differ in length");
    if (lambda.size() != X.cols()) throw Error(ErrorCode::dimension_mismatch, "lambda length != input dimension");
    if (!(lambda.array() > 0.0).all() || !lambda.allFinite()) {
      throw Error(ErrorCode::invalid_argument, "lambda must be positive and finite");
    }

    GpModel m;
    m.X_ = X;
    m.f_ = f;
    m.lambda_ = lambda;
    m.scaled_X_ = X * lambda.cwiseSqrt().asDiagonal();
    m.scaled_sq_norms_ = m.scaled_X_.rowwise().squaredNorm();

    Matrix R = m.correlation(X);
    double nugget = kMinNuggetScale * R.trace() / static_cast<double>(k);
    for (;;) {
      Matrix Rn = R;
      Rn.diagonal().array() += nugget;
      m.llt_.compute(Rn);
      if (m.llt_.info() == Eigen::Success && (m.llt_.matrixLLT().diagonal().array() > 0.0).all()) break;
      if (nugget >= kMaxNugget) {
        throw Error(ErrorCode::not_positive_definite,
                    "correlation matrix is not positive definite after maximum nugget",
                    "k=" + std::to_string(k) + ",nugget=" + std::to_string(nugget) +
                        ",min_diag=" + std::to_string(R.diagonal().minCoeff()));
      }
      nugget = std::min(nugget * 10.0, kMaxNugget);
    }
    m.nugget_ = nugget;

    const Vector ones = Vector::Ones(k);
    m.r_inv_ones_ = m.llt_.solve(ones);
    m.ones_r_inv_ones_ = ones.dot(m.r_inv_ones_);
    m.b_ = m.r_inv_ones_.dot(f) / m.ones_r_inv_ones_;
    const Vector resid = f.array() - m.b_;
    m.r_inv_resid_ = m.llt_.solve(resid);
    m.sigma2_ = std::max(0.0, resid.dot(m.r_inv_resid_) / static_cast<double>(k));
    m.log_det_ = 2.0 * m.llt_.matrixLLT().diagonal().array().log().sum();
    return m;
  }

  /// Correlations between each training input and each column of `points`
  /// (p x n). Returns k x n.
  Matrix cross_correlation(const Matrix& points) const {
    const Matrix scaled = lambda_.cwiseSqrt().asDiagonal() * points;
    Matrix d2 = -2.0 * (scaled_X_ * scaled);
    d2.colwise() += scaled_sq_norms_;
    d2.rowwise() += scaled.colwise().squaredNorm();
    return (-d2.array().max(0.0)).exp().matrix();
  }

  Prediction predict(const Vector& x) const {
    if (x.size() != X_.cols()) throw Error(ErrorCode::dimension_mismatch, "query point has wrong dimension");
    Vector r(X_.rows());
    for (Eigen::Index i = 0; i < X_.rows(); ++i) {
      const double d2 = ((X_.row(i).transpose() - x).array().square() * lambda_.array()).sum();
      r[i] = std::exp(-d2);
    }
    return predict_from_correlation(r);
  }

  /// Column-wise prediction for a p x n matrix of query points.
  BatchPrediction predict(const Matrix& points) const {
    if (points.rows() != X_.cols()) throw Error(ErrorCode::dimension_mismatch, "query points have wrong dimension");
    const Matrix r = cross_correlation(points);
    BatchPrediction out;
    out.mean = (r.transpose() * r_inv_resid_).array() + b_;
    const Matrix v = llt_.matrixL().solve(r);
    const Vector quad = v.colwise().squaredNorm().transpose();
    const Vector gap = 1.0 - (r.transpose() * r_inv_ones_).array();
    const Vector var = sigma2_ * (1.0 - quad.array() + gap.array().square() / ones_r_inv_ones_);
    out.sd = var.array().max(0.0).sqrt();
    return out;
  }

  Prediction predict_from_correlation(const Vector& r) const {
    Prediction p;
    p.mean = b_ + r.dot(r_inv_resid_);
    const Vector v = llt_.matrixL().solve(r);
    const double gap = 1.0 - r.dot(r_inv_ones_);
    const double var = sigma2_ * (1.0 - v.squaredNorm() + gap * gap / ones_r_inv_ones_);
    p.sd = var > 0.0 ? std::sqrt(var) : 0.0;
    return p;
  }

  /// log(sigma^k |R|^(1/2)); minus infinity when sigma2 is zero.
  double neg_log_likelihood() const {
    const double k = static_cast<double>(X_.rows());
    if (sigma2_ <= 0.0) return -std::numeric_limits<double>::infinity();
    return 0.5 * k * std::log(sigma2_) + 0.5 * log_det_;
  }

  const Matrix& inputs() const { return X_; }
  const Vector& values() const { return f_; }
  const Vector& lambda() const { return lambda_; }
  std::size_t size() const { return static_cast<std::size_t>(X_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(X_.cols()); }
  double b() const { return b_; }
  double sigma2() const { return sigma2_; }
  double nugget() const { return nugget_; }
  double log_det() const { return log_det_; }
  double min_value() const { return f_.minCoeff(); }
  /// 1^T R^-1 1 (with nugget).
  double ones_r_inv_ones() const { return ones_r_inv_ones_; }

 private:
  GpModel() = default;

  Matrix correlation(const Matrix& X) const {
    const Eigen::Index k = X.rows();
    Matrix R(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      R(i, i) = 1.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double d2 = ((X.row(i) - X.row(j)).array().square() * lambda_.transpose().array()).sum();
        R(i, j) = R(j, i) = std::exp(-d2);
      }
    }
    return R;
  }

  Matrix X_;
  Vector f_;
  Vector lambda_;
  Matrix scaled_X_;
  Vector scaled_sq_norms_;
  Eigen::LLT<Matrix> llt_;
  Vector r_inv_ones_;
  Vector r_inv_resid_;
  double ones_r_inv_ones_ = 0.0;
  double b_ = 0.0;
  double sigma2_ = 0.0;
  double nugget_ = 0.0;
  double log_det_ = 0.0;
};

inline GpModel fit_gp(const Trajectory& t, std::size_t n, const Vector& lambda) {
  return GpModel::fit(t.inputs(n), t.values(n), lambda);
}

/// Grid maximum-likelihood estimate of lambda: the candidate minimizing
/// log(sigma^k |R|^(1/2)). Ties go to the lexicographically smaller lambda.
/// Candidates whose correlation matrix cannot be factorized are skipped.
inline Vector mle_lambda(const Matrix& X, const Vector& f, std::span<const Vector> grid) {
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "lambda grid is empty");
  std::optional<std::size_t> best;
  double best_obj = std::numeric_limits<double>::infinity();
  auto lex_less = [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  };
  for (std::size_t c = 0; c < grid.size(); ++c) {
    double obj = 0.0;
    try {
      obj = GpModel::fit(X, f, grid[c]).neg_log_likelihood();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::not_positive_definite) continue;
      throw;
    }
    if (!std::isfinite(obj)) {
      throw Error(ErrorCode::degenerate_data, "zero process variance: objective values are constant",
                  "candidate=" + std::to_string(c));
    }
    if (!best || obj < best_obj || (obj == best_obj && lex_less(grid[c], grid[*best]))) {
      best = c;
      best_obj = obj;
    }
  }
  if (!best) throw Error(ErrorCode::not_positive_definite, "no lambda candidate yields a factorizable R");
  return grid[*best];
}

inline Vector mle_lambda(const Matrix& X, const Vector& f, const std::vector<Vector>& grid) {
  return mle_lambda(X, f, std::span<const Vector>(grid));
}

}  // namespace strategist
