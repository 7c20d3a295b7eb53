#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "strategist/core.hpp"
#include "strategist/gp.hpp"
#include "strategist/local_search.hpp"
#include "strategist/random.hpp"
#include "strategist/sampling.hpp"

namespace strategist {

/// EI = (f_min - mean) Phi(z) + sd phi(z), z = (f_min - mean) / sd.
/// Falls back to max(0, f_min - mean) when sd is zero; never negative.
inline double expected_improvement(double mean, double sd, double f_min) {
  const double gap = f_min - mean;
  if (!(sd > 0.0)) return std::max(0.0, gap);
  const double z = gap / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, gap * cdf + sd * pdf);
}

inline double expected_improvement(const GpModel& m, double f_min, const Vector& x) {
  const auto p = m.predict(x);
  return expected_improvement(p.mean, p.sd, f_min);
}

/// EI at every column of a p x n point matrix.
inline Vector expected_improvement(const GpModel& m, double f_min, const Matrix& points) {
  const auto p = m.predict(points);
  Vector out(points.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = expected_improvement(p.mean[i], p.sd[i], f_min);
  return out;
}

struct EiMaximum {
  Vector x;
  double ei = 0.0;
  /// Index of the start whose local ascent produced `x`.
  int start_index = 0;
  /// Every start and every local optimum share one EI value.
  bool flat = false;
};

struct EiSearchOptions {
  /// Finite-difference step as a fraction of each axis range.
  double fd_relative_step = 1e-6;
  BoxMinimizerOptions local{.max_iterations = 60, .history = 8, .gradient_tolerance = 1e-12,
                            .value_tolerance = 1e-9, .max_backtracks = 20};
};

/// Multi-start bounded quasi-Newton ascent of EI from `n_starts` Latin
/// hypercube points, with central finite-difference gradients. The best
/// local optimum wins; exact ties go to the lowest start index.
inline EiMaximum maximize_ei(const GpModel& m, double f_min, const SearchSpace& space, int n_starts,
                             std::uint64_t seed, const EiSearchOptions& opt = {}) {
  if (n_starts < 1) throw Error(ErrorCode::invalid_argument, "n_starts must be >= 1");
  const auto p = static_cast<Eigen::Index>(space.dim());
  const Vector step = opt.fd_relative_step * space.range();

  // Value at x plus the 2p central-difference probes in one batch.
  Matrix probes(p, 2 * p + 1);
  auto neg_ei = [&](const Vector& x, Vector& grad) {
    probes.col(0) = x;
    for (Eigen::Index a = 0; a < p; ++a) {
      probes.col(1 + 2 * a) = x;
      probes(a, 1 + 2 * a) += step[a];
      probes.col(2 + 2 * a) = x;
      probes(a, 2 + 2 * a) -= step[a];
    }
    const Vector ei = expected_improvement(m, f_min, probes);
    for (Eigen::Index a = 0; a < p; ++a) grad[a] = -(ei[1 + 2 * a] - ei[2 + 2 * a]) / (2.0 * step[a]);
    return -ei[0];
  };

  const auto starts = lhs(space, static_cast<std::size_t>(n_starts), seed);
  Matrix start_matrix(p, n_starts);
  for (int s = 0; s < n_starts; ++s) start_matrix.col(s) = starts[static_cast<std::size_t>(s)];
  const Vector start_ei = expected_improvement(m, f_min, start_matrix);

  const BoxMinimizer minimizer(opt.local);
  EiMaximum best;
  best.ei = -1.0;
  double local_lo = std::numeric_limits<double>::infinity();
  double local_hi = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_starts; ++s) {
    auto local = minimizer.minimize(neg_ei, starts[static_cast<std::size_t>(s)], space.lower(), space.upper());
    double value = -local.value;
    if (value < start_ei[s]) {  // keep the start if the search somehow lost ground
      value = start_ei[s];
      local.x = starts[static_cast<std::size_t>(s)];
    }
    local_lo = std::min(local_lo, value);
    local_hi = std::max(local_hi, value);
    if (value > best.ei) {
      best.ei = value;
      best.x = local.x;
      best.start_index = s;
    }
  }
  const double scale = 1e-12 * (1.0 + std::abs(local_hi));
  best.flat = (start_ei.maxCoeff() - start_ei.minCoeff() <= scale) && (local_hi - local_lo <= scale);
  return best;
}

enum class Termination { ei_below_tolerance, iteration_budget };

inline std::string_view to_string(Termination t) {
  return t == Termination::ei_below_tolerance ? "ei_below_tolerance" : "iteration_budget";
}

struct BoRunRecord {
  Trajectory trajectory;
  /// Running minimum of f: entry 0 covers the initial samples, entry i the
  /// first i BO iterations.
  std::vector<double> best_curve;
  Termination terminated_by = Termination::iteration_budget;
  std::size_t initial_count = 0;
  /// Lambda used at each executed iteration.
  std::vector<Vector> lambdas;
  /// Maximized EI at each executed iteration (and at the terminating check).
  std::vector<double> ei_values;

  std::size_t iterations() const { return trajectory.size() - initial_count; }
};

/// Raised when the objective callback fails; carries the partial record.
class BoAborted : public Error {
 public:
  BoAborted(const std::string& message, BoRunRecord partial)
      : Error(ErrorCode::objective_failure, message), partial_(std::move(partial)) {}
  const BoRunRecord& partial() const { return partial_; }

 private:
  BoRunRecord partial_;
};

using Objective = std::function<double(const Vector&)>;
/// Chooses lambda for the next iteration from the history so far.
using LambdaPolicy = std::function<Vector(const Trajectory& history, std::size_t iteration)>;
using BoObserver = std::function<void(const BoRunRecord&)>;

struct BoRunOptions {
  LambdaPolicy lambda_policy;  // default: params.lambda every iteration
  BoObserver observer;         // called after every appended iterate
  EiSearchOptions search;
};

/// Forward BO: fit -> maximize EI -> evaluate -> append, until the
/// maximized EI drops below the tolerance or `max_iter` is reached.
inline BoRunRecord run_bo(const Trajectory& initial, const BoParams& params, const Objective& objective,
                          std::size_t max_iter, std::uint64_t seed, const BoRunOptions& options = {}) {
  if (initial.size() < 2) throw Error(ErrorCode::insufficient_trajectory, "BO needs at least two initial samples");
  params.validate(initial.space().dim());

  BoRunRecord rec{initial, {initial.best_value()}, Termination::iteration_budget, initial.size(), {}, {}};
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    const Vector lambda = options.lambda_policy ? options.lambda_policy(rec.trajectory, iter) : params.lambda;
    const auto model = fit_gp(rec.trajectory, rec.trajectory.size(), lambda);
    const double f_min = rec.trajectory.best_value();
    const auto next = maximize_ei(model, f_min, initial.space(), params.n_starts,
                                  derive_seed(seed, {stream::bo_iteration, iter}), options.search);
    rec.ei_values.push_back(next.ei);
    if (next.ei < params.ei_tolerance) {
      rec.terminated_by = Termination::ei_below_tolerance;
      break;
    }
    double f = 0.0;
    try {
      f = objective(next.x);
    } catch (const std::exception& e) {
      throw BoAborted(std::string("objective failed at iteration ") + std::to_string(iter) + ": " + e.what(), rec);
    }
    if (!std::isfinite(f)) {
      throw BoAborted("objective returned a non-finite value at iteration " + std::to_string(iter), rec);
    }
    rec.trajectory.append({next.x, f});
    rec.lambdas.push_back(lambda);
    rec.best_curve.push_back(std::min(rec.best_curve.back(), f));
    if (options.observer) options.observer(rec);
  }
  return rec;
}

}  // namespace strategist
