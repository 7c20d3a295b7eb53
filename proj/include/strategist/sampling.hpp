#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "strategist/core.hpp"
#include "strategist/random.hpp"

namespace strategist {

/// log(sum(exp(v))) without overflow. Empty input gives -inf.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_sum_exp(const Vector& v) { return log_sum_exp(std::span<const double>(v.data(), v.size())); }

/// log(mean(exp(v))). Exact for a constant input.
inline double log_mean_exp(const Vector& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().mean());
}

/// Latin hypercube design: for every axis each of the n equal-width strata
/// holds exactly one point, jittered uniformly inside its stratum.
inline std::vector<Vector> lhs(const SearchSpace& space, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "lhs needs n >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto p = static_cast<Eigen::Index>(space.dim());
  std::vector<Vector> points(n, Vector(p));
  std::vector<std::size_t> perm(n);
  for (Eigen::Index a = 0; a < p; ++a) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const double lo = space.lower()[a];
    const double width = space.upper()[a] - lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + unit(rng)) / static_cast<double>(n);
      points[i][a] = std::min(lo + u * width, space.upper()[a]);
    }
  }
  return points;
}

/// n uniform draws from the box as a p x n matrix.
inline Matrix uniform_points(const SearchSpace& space, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto p = static_cast<Eigen::Index>(space.dim());
  Matrix out(p, static_cast<Eigen::Index>(n));
  const Vector width = space.range();
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index a = 0; a < p; ++a) out(a, j) = space.lower()[a] + unit(rng) * width[a];
  }
  return out;
}

/// n standard-normal vectors as a p x n matrix.
inline Matrix standard_normal_points(std::size_t dim, std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index a = 0; a < out.rows(); ++a) out(a, j) = normal(rng);
  }
  return out;
}

/// Minimum Euclidean distance from x to the rows of X_prev (k x p).
inline double max_min_distance(const Vector& x, const Matrix& X_prev) {
  if (X_prev.rows() == 0) throw Error(ErrorCode::invalid_argument, "max_min_distance needs a nonempty set");
  return std::sqrt((X_prev.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff());
}

inline double max_min_distance(const Vector& x, std::span<const Vector> X_prev) {
  if (X_prev.empty()) throw Error(ErrorCode::invalid_argument, "max_min_distance needs a nonempty set");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& y : X_prev) best = std::min(best, (x - y).squaredNorm());
  return std::sqrt(best);
}

/// Mixed uniform / isotropic-normal proposal for the BO partition function.
struct ProposalConfig {
  /// Normal spread, in the units of the space (normalized units in IBO).
  double sigma = 0.01;
  std::size_t n_uniform = 5000;
  /// Zero selects the plain uniform Monte Carlo estimator.
  std::size_t n_normal = 5000;

  void validate() const {
    if (!(sigma > 0.0)) throw Error(ErrorCode::invalid_argument, "proposal sigma must be positive");
    if (n_uniform < 1) throw Error(ErrorCode::invalid_argument, "proposal needs at least one uniform draw");
  }
};

struct LogPartition {
  double log_z = 0.0;
  /// Standard error of log_z (delta method on the sample-mean estimator).
  double se = 0.0;
};

/// One draw of the two proposal populations around a center mu, with the
/// per-sample balance-heuristic log weights log(D / (n_pop (1 + D q(x)))).
/// Normal draws outside the box are projected for evaluation; q is taken
/// at the unprojected point.
class ProposalSample {
 public:
  static ProposalSample draw(const SearchSpace& space, const Vector& mu, const ProposalConfig& cfg,
                             std::uint64_t seed) {
    cfg.validate();
    if (static_cast<std::size_t>(mu.size()) != space.dim()) {
      throw Error(ErrorCode::dimension_mismatch, "proposal center has wrong dimension");
    }
    Rng rng(seed);
    ProposalSample s;
    s.n_uniform_ = cfg.n_uniform;
    s.n_normal_ = cfg.n_normal;
    s.log_volume_ = space.log_volume();
    const auto p = static_cast<double>(space.dim());
    const auto I = static_cast<Eigen::Index>(cfg.n_uniform);
    const auto J = static_cast<Eigen::Index>(cfg.n_normal);
    s.points_.resize(mu.size(), I + J);
    s.log_weights_.resize(I + J);

    s.points_.leftCols(I) = uniform_points(space, cfg.n_uniform, rng);
    Matrix z;
    if (J > 0) z = standard_normal_points(space.dim(), cfg.n_normal, rng);

    const double log_q_norm = -0.5 * p * std::log(2.0 * std::numbers::pi) - p * std::log(cfg.sigma);
    const double two_s2 = 2.0 * cfg.sigma * cfg.sigma;
    auto log_one_plus = [](double log_x) {  // log(1 + exp(log_x))
      return log_x > 0.0 ? log_x + std::log1p(std::exp(-log_x)) : std::log1p(std::exp(log_x));
    };
    const double D = s.log_volume_;
    for (Eigen::Index i = 0; i < I; ++i) {
      if (J == 0) {
        s.log_weights_[i] = D - std::log(static_cast<double>(I));
        continue;
      }
      const double log_q = log_q_norm - (s.points_.col(i) - mu).squaredNorm() / two_s2;
      s.log_weights_[i] = D - std::log(static_cast<double>(I)) - log_one_plus(D + log_q);
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      const Vector raw = mu + cfg.sigma * z.col(j);
      const double log_q = log_q_norm - z.col(j).squaredNorm() / 2.0;
      s.points_.col(I + j) = space.clamp(raw);
      s.log_weights_[I + j] = D - std::log(static_cast<double>(J)) - log_one_plus(D + log_q);
    }
    return s;
  }

  /// p x (I + J) evaluation points: uniform draws first, then normal draws.
  const Matrix& points() const { return points_; }
  const Vector& log_weights() const { return log_weights_; }
  std::size_t n_uniform() const { return n_uniform_; }
  std::size_t n_normal() const { return n_normal_; }
  double log_volume() const { return log_volume_; }

  /// log Z-hat of exp(alpha * values) where `values` holds the integrand
  /// exponent at each point (same order as points()).
  LogPartition log_partition(const Vector& values, double alpha) const {
    if (values.size() != log_weights_.size()) {
      throw Error(ErrorCode::dimension_mismatch, "one value per proposal point is required");
    }
    const Vector terms = (alpha * values.array() + log_weights_.array()).matrix();
    LogPartition out;
    out.log_z = log_sum_exp(terms);
    if (!std::isfinite(out.log_z)) return out;

    // Variance of sum_U a_i / I + sum_N b_j / J with a, b rescaled by Z-hat.
    auto population_var = [&](Eigen::Index begin, Eigen::Index count) {
      if (count < 2) return 0.0;
      // Each term is (value / n_pop); the sample item is n_pop * term.
      const Vector items = ((terms.segment(begin, count).array() - out.log_z).exp() *
                            static_cast<double>(count)).matrix();
      const double mean = items.mean();
      const double var = (items.array() - mean).square().sum() / static_cast<double>(count - 1);
      return var / static_cast<double>(count);
    };
    const auto I = static_cast<Eigen::Index>(n_uniform_);
    const auto J = static_cast<Eigen::Index>(n_normal_);
    out.se = std::sqrt(population_var(0, I) + population_var(I, J));
    return out;
  }

 private:
  Matrix points_;
  Vector log_weights_;
  std::size_t n_uniform_ = 0;
  std::size_t n_normal_ = 0;
  double log_volume_ = 0.0;
};

/// log of the estimated integral over the box of exp(alpha_bo * ei(x)).
template <class Ei>
double z_bo_hat(Ei&& ei, double alpha_bo, const SearchSpace& space, const Vector& mu, const ProposalConfig& cfg,
                std::uint64_t seed) {
  if (!(alpha_bo >= 0.0)) throw Error(ErrorCode::invalid_argument, "alpha_bo must be nonnegative");
  const auto sample = ProposalSample::draw(space, mu, cfg, seed);
  Vector values(sample.points().cols());
  for (Eigen::Index i = 0; i < values.size(); ++i) values[i] = ei(Vector(sample.points().col(i)));
  return sample.log_partition(values, alpha_bo).log_z;
}

/// log of the Monte Carlo estimate of the integral over the box of
/// exp(alpha_ini * d(x)): log D + log-mean-exp over n uniform draws.
template <class Distance>
double z_ini_hat(Distance&& d_fn, double alpha_ini, const SearchSpace& space, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "z_ini_hat needs n >= 1");
  Rng rng(seed);
  const Matrix u = uniform_points(space, n, rng);
  Vector v(u.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = alpha_ini * d_fn(Vector(u.col(i)));
  return space.log_volume() + log_mean_exp(v);
}

}  // namespace strategist
