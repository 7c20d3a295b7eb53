#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "strategist/core.hpp"

namespace strategist {

struct BoxMinimizerOptions {
  int max_iterations = 100;
  int history = 10;
  /// Stop when the projected gradient's max-norm falls below this.
  double gradient_tolerance = 1e-9;
  /// Stop when the relative decrease of one step falls below this.
  double value_tolerance = 1e-12;
  int max_backtracks = 30;
};

struct BoxMinimum {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Objective returning the value at x and writing its gradient.
using ValueAndGradient = std::function<double(const Vector& x, Vector& gradient)>;

/// Central finite-difference gradient with per-axis steps.
inline Vector central_difference(const std::function<double(const Vector&)>& fn, const Vector& x,
                                 const Vector& step) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    probe[a] = x[a] + step[a];
    const double up = fn(probe);
    probe[a] = x[a] - step[a];
    const double down = fn(probe);
    probe[a] = x[a];
    g[a] = (up - down) / (2.0 * step[a]);
  }
  return g;
}

/// Bounded quasi-Newton minimization: L-BFGS directions restricted to the
/// free variables, projected onto the box, with an Armijo backtracking
/// search along the projected path.
class BoxMinimizer {
 public:
  explicit BoxMinimizer(BoxMinimizerOptions options = {}) : opt_(options) {}

  BoxMinimum minimize(const ValueAndGradient& fn, Vector x, const Vector& lower, const Vector& upper) const {
    const Eigen::Index n = x.size();
    x = x.cwiseMax(lower).cwiseMin(upper);
    Vector g(n);
    BoxMinimum result;
    double fx = fn(x, g);
    ++result.evaluations;

    std::deque<std::pair<Vector, Vector>> memory;  // (s, y)
    const double box_scale = (upper - lower).maxCoeff();

    for (int iter = 0; iter < opt_.max_iterations; ++iter) {
      result.iterations = iter + 1;
      // Variables pinned at a bound with the gradient pushing outward are held.
      Eigen::Array<bool, Eigen::Dynamic, 1> free(n);
      Vector pg = g;
      for (Eigen::Index a = 0; a < n; ++a) {
        const bool at_lower = x[a] <= lower[a] && g[a] > 0.0;
        const bool at_upper = x[a] >= upper[a] && g[a] < 0.0;
        free[a] = !(at_lower || at_upper);
        if (!free[a]) pg[a] = 0.0;
      }
      if (!pg.allFinite() || pg.lpNorm<Eigen::Infinity>() <= opt_.gradient_tolerance) break;

      Vector d = two_loop(pg, memory, free);
      if (!(d.dot(pg) < 0.0) || !d.allFinite()) {
        d = -pg;
        memory.clear();
      }
      double step = 1.0;
      if (memory.empty()) {
        const double dn = d.lpNorm<Eigen::Infinity>();
        if (dn > 0.0) step = std::min(1.0, box_scale / dn);
      }

      Vector x_new(n);
      Vector g_new(n);
      double f_new = fx;
      bool accepted = false;
      for (int bt = 0; bt < opt_.max_backtracks; ++bt) {
        x_new = (x + step * d).cwiseMax(lower).cwiseMin(upper);
        const double decrease = g.dot(x_new - x);
        if (x_new == x) break;
        f_new = fn(x_new, g_new);
        ++result.evaluations;
        if (std::isfinite(f_new) && f_new <= fx + 1e-4 * decrease) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;

      const Vector s = x_new - x;
      const Vector y = g_new - g;
      const double prev = fx;
      x = x_new;
      g = g_new;
      fx = f_new;
      if (s.dot(y) > 1e-12 * s.squaredNorm() * std::max(1.0, y.norm())) {
        memory.emplace_back(s, y);
        if (static_cast<int>(memory.size()) > opt_.history) memory.pop_front();
      }
      if (prev - fx <= opt_.value_tolerance * (1.0 + std::abs(prev))) break;
    }
    result.x = x;
    result.value = fx;
    return result;
  }

 private:
  static Vector two_loop(const Vector& g, const std::deque<std::pair<Vector, Vector>>& memory,
                         const Eigen::Array<bool, Eigen::Dynamic, 1>& free) {
    const Vector mask = free.cast<double>().matrix();
    Vector q = g.cwiseProduct(mask);
    if (memory.empty()) return -q;
    std::vector<double> alpha(memory.size());
    std::vector<double> rho(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      const Vector s = memory[i].first.cwiseProduct(mask);
      const Vector y = memory[i].second.cwiseProduct(mask);
      const double sy = s.dot(y);
      rho[i] = sy > 0.0 ? 1.0 / sy : 0.0;
      alpha[i] = rho[i] * s.dot(q);
      q -= alpha[i] * y;
    }
    const Vector s_last = memory.back().first.cwiseProduct(mask);
    const Vector y_last = memory.back().second.cwiseProduct(mask);
    const double yy = y_last.squaredNorm();
    const double gamma = yy > 0.0 ? s_last.dot(y_last) / yy : 1.0;
    Vector r = (gamma > 0.0 ? gamma : 1.0) * q;
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const Vector s = memory[i].first.cwiseProduct(mask);
      const Vector y = memory[i].second.cwiseProduct(mask);
      const double beta = rho[i] * y.dot(r);
      r += s * (alpha[i] - beta);
    }
    return -r.cwiseProduct(mask);
  }

  BoxMinimizerOptions opt_;
};

}  // namespace strategist
