#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "strategist/error.hpp"

namespace strategist {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box. Bounds are inclusive.
class SearchSpace {
 public:
  SearchSpace(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() == 0) {
      throw Error(ErrorCode::invalid_argument, "search space must have at least one dimension");
    }
    if (lower_.size() != upper_.size()) {
      throw Error(ErrorCode::dimension_mismatch, "lower and upper bounds differ in length");
    }
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i])) {
        throw Error(ErrorCode::degenerate_axis,
                    "axis " + std::to_string(i) + " has lower >= upper or non-finite bounds",
                    "axis=" + std::to_string(i));
      }
    }
  }

  /// [-1, 1]^dim.
  static SearchSpace unit(std::size_t dim) {
    return {Vector::Constant(static_cast<Eigen::Index>(dim), -1.0),
            Vector::Constant(static_cast<Eigen::Index>(dim), 1.0)};
  }

  static SearchSpace cube(std::size_t dim, double lo, double hi) {
    return {Vector::Constant(static_cast<Eigen::Index>(dim), lo),
            Vector::Constant(static_cast<Eigen::Index>(dim), hi)};
  }

  std::size_t dim() const { return static_cast<std::size_t>(lower_.size()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  Vector range() const { return upper_ - lower_; }

  /// log D, accumulated per axis so high-dimensional volumes never overflow.
  double log_volume() const { return (upper_ - lower_).array().log().sum(); }

  bool contains(const Vector& x) const {
    if (x.size() != lower_.size()) return false;
    return (x.array() >= lower_.array()).all() && (x.array() <= upper_.array()).all();
  }

  Vector clamp(const Vector& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

  bool operator==(const SearchSpace& other) const {
    return lower_ == other.lower_ && upper_ == other.upper_;
  }

 private:
  Vector lower_;
  Vector upper_;
};

struct Sample {
  Vector x;
  double f = 0.0;

  bool operator==(const Sample& other) const { return x == other.x && f == other.f; }
};

/// Ordered solution/objective pairs inside a search space. Every x is
/// within bounds and no two samples share an identical x.
class Trajectory {
 public:
  explicit Trajectory(SearchSpace space) : space_(std::move(space)) {}

  Trajectory(SearchSpace space, std::vector<Sample> samples) : space_(std::move(space)) {
    samples_.reserve(samples.size());
    for (auto& s : samples) append(std::move(s));
  }

  void append(Sample s) {
    const std::size_t index = samples_.size();
    validate(s, index);
    samples_.push_back(std::move(s));
  }

  /// Throws the same error `append` would, without modifying the trajectory.
  void validate(const Sample& s, std::size_t index) const {
    const std::string where = "samples[" + std::to_string(index) + "]";
    if (static_cast<std::size_t>(s.x.size()) != space_.dim()) {
      throw Error(ErrorCode::dimension_mismatch,
                  where + ": x has length " + std::to_string(s.x.size()) + ", expected " +
                      std::to_string(space_.dim()),
                  where);
    }
    if (!std::isfinite(s.f)) {
      throw Error(ErrorCode::invalid_argument, where + ": objective value is not finite", where);
    }
    for (Eigen::Index a = 0; a < s.x.size(); ++a) {
      if (!(s.x[a] >= space_.lower()[a] && s.x[a] <= space_.upper()[a])) {
        throw Error(ErrorCode::out_of_bounds,
                    where + ": axis " + std::to_string(a) + " value outside [" +
                        std::to_string(space_.lower()[a]) + ", " + std::to_string(space_.upper()[a]) + "]",
                    where + ",axis=" + std::to_string(a));
      }
    }
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (samples_[i].x == s.x) {
        throw Error(ErrorCode::duplicate_sample,
                    where + ": x duplicates samples[" + std::to_string(i) + "]", where);
      }
    }
  }

  const SearchSpace& space() const { return space_; }
  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  /// First `n` samples.
  Trajectory prefix(std::size_t n) const {
    Trajectory out(space_);
    out.samples_.assign(samples_.begin(), samples_.begin() + static_cast<std::ptrdiff_t>(std::min(n, size())));
    return out;
  }

  /// Inputs of the first `n` samples as an n x p matrix.
  Matrix inputs(std::size_t n) const {
    Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(space_.dim()));
    for (std::size_t i = 0; i < n; ++i) X.row(static_cast<Eigen::Index>(i)) = samples_[i].x.transpose();
    return X;
  }
  Matrix inputs() const { return inputs(size()); }

  Vector values(std::size_t n) const {
    Vector f(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) f[static_cast<Eigen::Index>(i)] = samples_[i].f;
    return f;
  }
  Vector values() const { return values(size()); }

  double best_value() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : samples_) best = std::min(best, s.f);
    return best;
  }

  bool operator==(const Trajectory& other) const {
    return space_ == other.space_ && samples_ == other.samples_;
  }

 private:
  SearchSpace space_;
  std::vector<Sample> samples_;
};

struct BoParams {
  Vector lambda;
  double ei_tolerance = 1e-3;
  int n_starts = 100;

  void validate(std::size_t dim) const {
    if (static_cast<std::size_t>(lambda.size()) != dim) {
      throw Error(ErrorCode::dimension_mismatch, "lambda length does not match the space dimension");
    }
    if (!(lambda.array() > 0.0).all()) throw Error(ErrorCode::invalid_argument, "lambda must be positive");
    if (!(ei_tolerance > 0.0)) throw Error(ErrorCode::invalid_argument, "ei_tolerance must be positive");
    if (n_starts < 1) throw Error(ErrorCode::invalid_argument, "n_starts must be >= 1");
  }
};

enum class TermKind { exploration, bo };

/// One summand of the inverse-BO cost: an exploration term for sample
/// `index` (1-based, >= 2) or a BO term for sample `index` (>= 3).
struct CostTerm {
  TermKind kind = TermKind::bo;
  std::size_t index = 0;
  double value = 0.0;
};

struct IboEstimate {
  Vector lambda_hat;
  double alpha_bo_hat = 0.0;
  double alpha_ini_hat = 0.0;
  std::size_t k0_hat = 2;
  double cost = 0.0;
  /// The terms that make up `cost` for the selected split.
  std::vector<CostTerm> terms;
  /// Set when continuous estimation could not beat the best grid corner.
  bool fallback_to_corner = false;

  double terms_sum() const {
    double s = 0.0;
    for (const auto& t : terms) s += t.value;
    return s;
  }
};

/// Affine map between a box and [-1, 1]^p, applied per axis.
class BoxMap {
 public:
  explicit BoxMap(const SearchSpace& space) : lower_(space.lower()), upper_(space.upper()) {}

  /// Accepts raw bounds so degenerate axes are reported here rather than
  /// by SearchSpace.
  BoxMap(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size()) throw Error(ErrorCode::dimension_mismatch, "bounds differ in length");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      if (!(upper_[i] > lower_[i])) {
        throw Error(ErrorCode::degenerate_axis, "axis " + std::to_string(i) + " is degenerate",
                    "axis=" + std::to_string(i));
      }
    }
  }

  Vector to_unit(const Vector& x) const {
    Vector u = (2.0 * (x - lower_).array() / (upper_ - lower_).array() - 1.0).matrix();
    return u.cwiseMax(-1.0).cwiseMin(1.0);
  }

  Vector from_unit(const Vector& u) const {
    Vector x = (lower_.array() + (u.array() + 1.0) * 0.5 * (upper_ - lower_).array()).matrix();
    return x.cwiseMax(lower_).cwiseMin(upper_);
  }

  SearchSpace unit_space() const { return SearchSpace::unit(static_cast<std::size_t>(lower_.size())); }
  SearchSpace space() const { return {lower_, upper_}; }

 private:
  Vector lower_;
  Vector upper_;
};

inline bool is_unit_space(const SearchSpace& space) {
  return (space.lower().array() == -1.0).all() && (space.upper().array() == 1.0).all();
}

/// Maps a trajectory onto [-1, 1]^p. Objective values are unchanged. An
/// already-normalized trajectory is returned as is.
inline Trajectory normalize_trajectory(const Trajectory& t) {
  if (is_unit_space(t.space())) return t;
  const BoxMap map(t.space());
  Trajectory out(map.unit_space());
  for (const auto& s : t.samples()) out.append({map.to_unit(s.x), s.f});
  return out;
}

/// Inverse of `normalize_trajectory` for a known original space.
inline Trajectory denormalize_trajectory(const Trajectory& unit, const SearchSpace& original) {
  const BoxMap map(original);
  Trajectory out(original);
  for (const auto& s : unit.samples()) out.append({map.from_unit(s.x), s.f});
  return out;
}

}  // namespace strategist
