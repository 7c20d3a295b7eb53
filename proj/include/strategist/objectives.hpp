#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "strategist/core.hpp"

namespace strategist {

/// Chained Rosenbrock: sum_{i<p} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.
inline double rosenbrock(const Vector& x) {
  double s = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    const double b = 1.0 - x[i];
    s += 100.0 * a * a + b * b;
  }
  return s;
}

inline double rastrigin(const Vector& x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i] * x[i] - 10.0 * std::cos(2.0 * std::numbers::pi * x[i]);
  return s;
}

/// Branin-Hoo on [-5, 10] x [0, 15]; global minimum 0.397887.
inline double branin(const Vector& x) {
  constexpr double pi = std::numbers::pi;
  const double b = 5.1 / (4.0 * pi * pi);
  const double c = 5.0 / pi;
  const double t = 1.0 / (8.0 * pi);
  const double u = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
  return u * u + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
}

/// An objective defined on a raw box, exposed on [-1, 1]^p.
struct NormalizedObjective {
  std::string name;
  SearchSpace raw_space;
  std::function<double(const Vector&)> raw;

  SearchSpace space() const { return SearchSpace::unit(raw_space.dim()); }
  double operator()(const Vector& unit_x) const { return raw(BoxMap(raw_space).from_unit(unit_x)); }
};

/// Named objectives available to sessions. Tests may register extra entries.
class ObjectiveRegistry {
 public:
  static ObjectiveRegistry with_defaults() {
    ObjectiveRegistry r;
    r.add({"rosenbrock2d", SearchSpace::cube(2, -2.0, 2.0), rosenbrock});
    r.add({"rastrigin2d", SearchSpace::cube(2, -5.12, 5.12), rastrigin});
    Vector lo(2), hi(2);
    lo << -5.0, 0.0;
    hi << 10.0, 15.0;
    r.add({"branin", SearchSpace(lo, hi), branin});
    return r;
  }

  void add(NormalizedObjective obj) {
    const std::string key = obj.name;
    entries_.insert_or_assign(key, std::move(obj));
  }

  const NormalizedObjective& get(const std::string& name) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) {
      std::string list;
      for (const auto& n : names()) list += (list.empty() ? "" : ", ") + n;
      throw Error(ErrorCode::invalid_argument, "unknown objective '" + name + "'; available: " + list, list);
    }
    return it->second;
  }

  bool contains(const std::string& name) const { return entries_.contains(name); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, NormalizedObjective> entries_;
};

}  // namespace strategist
