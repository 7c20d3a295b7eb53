#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "strategist/acquisition.hpp"
#include "strategist/core.hpp"
#include "strategist/gp.hpp"
#include "strategist/local_search.hpp"
#include "strategist/random.hpp"
#include "strategist/sampling.hpp"

namespace strategist {

inline std::vector<Vector> isotropic_grid(std::size_t dim, std::span<const double> values) {
  std::vector<Vector> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(Vector::Constant(static_cast<Eigen::Index>(dim), v));
  return out;
}

inline std::vector<Vector> isotropic_grid(std::size_t dim, std::initializer_list<double> values) {
  return isotropic_grid(dim, std::span<const double>(values.begin(), values.size()));
}

struct IboConfig {
  std::vector<double> alpha_bo_grid{0.01, 0.1, 1.0, 10.0};
  std::vector<double> alpha_ini_values{1.0, 10.0};
  /// Grid-mode lambda candidates. Empty means isotropic {0.01, 0.1, 1, 10}.
  std::vector<Vector> lambda_grid;
  /// Continuous-mode box for every lambda component.
  double lambda_lower = 0.01;
  double lambda_upper = 10.0;
  int n_restarts = 10;
  /// Central-difference step on log10(lambda).
  double fd_step = 1e-3;
  int max_descent_iterations = 40;
  std::optional<std::size_t> k0_fixed;
  ProposalConfig proposal;
  std::size_t n_ini_samples = 10000;
  /// Smallest trajectory prefix reported in the cost table.
  std::size_t min_prefix = 3;
  std::uint64_t seed = 0;

  std::vector<Vector> lambda_candidates(std::size_t dim) const {
    if (!lambda_grid.empty()) return lambda_grid;
    return isotropic_grid(dim, {0.01, 0.1, 1.0, 10.0});
  }

  void validate(std::size_t dim) const {
    if (alpha_bo_grid.empty() || alpha_ini_values.empty()) {
      throw Error(ErrorCode::invalid_argument, "alpha grids must be nonempty");
    }
    for (double a : alpha_bo_grid) {
      if (!(a >= 0.0)) throw Error(ErrorCode::invalid_argument, "alpha_bo values must be nonnegative");
    }
    for (double a : alpha_ini_values) {
      if (!(a >= 0.0)) throw Error(ErrorCode::invalid_argument, "alpha_ini values must be nonnegative");
    }
    for (const auto& l : lambda_grid) {
      if (static_cast<std::size_t>(l.size()) != dim) {
        throw Error(ErrorCode::dimension_mismatch, "lambda grid entry has wrong dimension");
      }
      if (!(l.array() > 0.0).all()) throw Error(ErrorCode::invalid_argument, "lambda grid entries must be positive");
    }
    if (!(lambda_lower > 0.0) || !(lambda_upper >= lambda_lower)) {
      throw Error(ErrorCode::invalid_argument, "lambda bounds must satisfy 0 < lower <= upper");
    }
    if (n_restarts < 1) throw Error(ErrorCode::invalid_argument, "n_restarts must be >= 1");
    if (!(fd_step > 0.0)) throw Error(ErrorCode::invalid_argument, "fd_step must be positive");
    if (n_ini_samples < 1) throw Error(ErrorCode::invalid_argument, "n_ini_samples must be >= 1");
    if (k0_fixed && *k0_fixed < 2) throw Error(ErrorCode::invalid_argument, "k0 must be >= 2");
    proposal.validate();
  }
};

/// Exploration terms l~_i = -alpha d(x_i, X_<i) + log(Z_INI / D) for
/// i = 2..T, one row per alpha. The uniform draws for term i depend only
/// on (seed, i), so every alpha sees the same sample.
///
/// Result: out[a][i] for 1-based position i; entries 0 and 1 are unused.
inline std::vector<std::vector<double>> exploration_terms(const Trajectory& t, std::span<const double> alphas,
                                                          std::size_t n_samples, std::uint64_t seed,
                                                          std::size_t last = 0) {
  const std::size_t T = last == 0 ? t.size() : std::min(last, t.size());
  std::vector<std::vector<double>> out(alphas.size(), std::vector<double>(T + 1, 0.0));
  for (std::size_t i = 2; i <= T; ++i) {
    const Matrix prev = t.inputs(i - 1);
    const double d_i = max_min_distance(t[i - 1].x, prev);
    Rng rng(derive_seed(seed, {stream::exploration_term, i}));
    const Matrix u = uniform_points(t.space(), n_samples, rng);
    Vector d(u.cols());
    for (Eigen::Index s = 0; s < d.size(); ++s) d[s] = max_min_distance(Vector(u.col(s)), prev);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const double alpha = alphas[a];
      if (alpha == 0.0) {
        out[a][i] = 0.0;
        continue;
      }
      out[a][i] = -alpha * d_i + log_mean_exp((alpha * d.array()).matrix());
    }
  }
  return out;
}

/// l~_i for one sample (1-based i >= 2).
inline double l_ini_term(const Trajectory& t, std::size_t i, double alpha_ini, std::size_t n_samples,
                         std::uint64_t seed) {
  if (i < 2 || i > t.size()) throw Error(ErrorCode::invalid_argument, "exploration term index must be in 2..T");
  if (alpha_ini == 0.0) return 0.0;
  const Matrix prev = t.inputs(i - 1);
  const double d_i = max_min_distance(t[i - 1].x, prev);
  Rng rng(derive_seed(seed, {stream::exploration_term, i}));
  const Matrix u = uniform_points(t.space(), n_samples, rng);
  Vector d(u.cols());
  for (Eigen::Index s = 0; s < d.size(); ++s) d[s] = max_min_distance(Vector(u.col(s)), prev);
  return -alpha_ini * d_i + log_mean_exp((alpha_ini * d.array()).matrix());
}

/// Evaluates BO terms l_j = -alpha EI(x_j) + log(Z_BO / D) for j = 3..T.
/// The proposal sample for term j is drawn once, centered at x_j, from a
/// seed that depends only on (seed, j): all lambda and alpha values share
/// it (common random numbers).
class BoTermEvaluator {
 public:
  BoTermEvaluator(const Trajectory& t, const ProposalConfig& proposal, std::uint64_t seed, std::size_t last = 0)
      : t_(t), last_(last == 0 ? t.size() : std::min(last, t.size())) {
    samples_.reserve(last_ + 1);
    for (std::size_t j = 0; j <= last_; ++j) {
      if (j < 3) {
        samples_.emplace_back();
        continue;
      }
      samples_.push_back(ProposalSample::draw(t.space(), t[j - 1].x, proposal, derive_seed(seed, {stream::bo_term, j})));
    }
  }

  struct TermDetail {
    double ei_at_sample = 0.0;
    /// Per alpha: log Z-hat and its standard error.
    std::vector<LogPartition> partitions;
    std::vector<double> values;
  };

  /// Term j (1-based, 3..last) for each alpha.
  TermDetail term_detail(std::size_t j, const Vector& lambda, std::span<const double> alphas) const {
    if (j < 3 || j > last_) throw Error(ErrorCode::invalid_argument, "BO term index must be in 3..T");
    const auto model = fit_gp(t_, j - 1, lambda);
    const double f_min = model.min_value();
    TermDetail out;
    out.ei_at_sample = expected_improvement(model, f_min, t_[j - 1].x);
    const auto& sample = *samples_[j];
    const Vector ei = expected_improvement(model, f_min, sample.points());
    for (double alpha : alphas) {
      if (alpha == 0.0) {
        out.partitions.push_back({sample.log_volume(), 0.0});
        out.values.push_back(0.0);
        continue;
      }
      const auto lp = sample.log_partition(ei, alpha);
      out.partitions.push_back(lp);
      out.values.push_back(-alpha * out.ei_at_sample + lp.log_z - sample.log_volume());
    }
    return out;
  }

  std::vector<double> term(std::size_t j, const Vector& lambda, std::span<const double> alphas) const {
    return term_detail(j, lambda, alphas).values;
  }

  /// out[a][j] for j = 3..last; entries below 3 are zero.
  std::vector<std::vector<double>> terms(const Vector& lambda, std::span<const double> alphas) const {
    std::vector<std::vector<double>> out(alphas.size(), std::vector<double>(last_ + 1, 0.0));
    for (std::size_t j = 3; j <= last_; ++j) {
      const auto v = term(j, lambda, alphas);
      for (std::size_t a = 0; a < alphas.size(); ++a) out[a][j] = v[a];
    }
    return out;
  }

  /// Sum of l_j for j = first..last at one alpha.
  double bo_sum(const Vector& lambda, double alpha, std::size_t first) const {
    const double a[] = {alpha};
    double s = 0.0;
    for (std::size_t j = std::max<std::size_t>(first, 3); j <= last_; ++j) s += term(j, lambda, a)[0];
    return s;
  }

  const ProposalSample& sample(std::size_t j) const { return *samples_.at(j); }
  std::size_t last() const { return last_; }

 private:
  const Trajectory& t_;
  std::size_t last_;
  std::vector<std::optional<ProposalSample>> samples_;
};

/// l_j for one sample (1-based j >= 3).
inline double l_bo_term(const Trajectory& t, std::size_t j, const Vector& lambda, double alpha_bo,
                        const ProposalConfig& proposal, std::uint64_t seed) {
  if (j < 3 || j > t.size()) throw Error(ErrorCode::invalid_argument, "BO term index must be in 3..T");
  if (alpha_bo == 0.0) return 0.0;
  const auto sample = ProposalSample::draw(t.space(), t[j - 1].x, proposal, derive_seed(seed, {stream::bo_term, j}));
  const auto model = fit_gp(t, j - 1, lambda);
  const double f_min = model.min_value();
  const double ei_x = expected_improvement(model, f_min, t[j - 1].x);
  const Vector ei = expected_improvement(model, f_min, sample.points());
  return -alpha_bo * ei_x + sample.log_partition(ei, alpha_bo).log_z - sample.log_volume();
}

struct SplitCost {
  std::size_t k0 = 2;
  double cost = 0.0;
};

/// L(K0) = sum_{i=2..K0} l~_i + sum_{j=K0+1..K} l_j over the first K
/// samples. Scans K0 = 2..K (or uses `k0_fixed`); ties go to the smaller K0.
/// `ini` and `bo` are indexed by 1-based position.
inline SplitCost scan_k0(std::span<const double> ini, std::span<const double> bo, std::size_t K,
                         std::optional<std::size_t> k0_fixed = std::nullopt) {
  if (K < 2) throw Error(ErrorCode::insufficient_trajectory, "cost needs at least two samples");
  // Prefix sums of exploration terms and suffix sums of BO terms.
  std::vector<double> ini_prefix(K + 1, 0.0);
  for (std::size_t i = 2; i <= K; ++i) ini_prefix[i] = ini_prefix[i - 1] + ini[i];
  std::vector<double> bo_suffix(K + 2, 0.0);
  for (std::size_t j = K; j >= 3; --j) bo_suffix[j] = bo_suffix[j + 1] + bo[j];
  auto cost_at = [&](std::size_t k0) { return ini_prefix[k0] + bo_suffix[std::max<std::size_t>(k0 + 1, 3)]; };

  if (k0_fixed) {
    if (*k0_fixed < 2 || *k0_fixed > K) throw Error(ErrorCode::invalid_argument, "fixed K0 must be in 2..K");
    return {*k0_fixed, cost_at(*k0_fixed)};
  }
  SplitCost best{2, cost_at(2)};
  for (std::size_t k0 = 3; k0 <= K; ++k0) {
    const double c = cost_at(k0);
    if (c < best.cost) best = {k0, c};
  }
  return best;
}

inline std::vector<CostTerm> contributing_terms(std::span<const double> ini, std::span<const double> bo,
                                                std::size_t K, std::size_t k0) {
  std::vector<CostTerm> terms;
  for (std::size_t i = 2; i <= k0; ++i) terms.push_back({TermKind::exploration, i, ini[i]});
  for (std::size_t j = std::max<std::size_t>(k0 + 1, 3); j <= K; ++j) terms.push_back({TermKind::bo, j, bo[j]});
  return terms;
}

struct CostBreakdown {
  double cost = 0.0;
  std::size_t k0 = 2;
  /// l~_i by 1-based position (i >= 2) and l_j (j >= 3); other slots zero.
  std::vector<double> ini_terms;
  std::vector<double> bo_terms;
  /// The summands of `cost`.
  std::vector<CostTerm> terms;
};

/// Inverse-BO cost of a trajectory for fixed parameters, minimized over
/// the exploration/BO split.
inline CostBreakdown total_cost(const Trajectory& t, const Vector& lambda, double alpha_ini, double alpha_bo,
                                const IboConfig& cfg) {
  const std::size_t T = t.size();
  if (T < 3 && !cfg.k0_fixed) throw Error(ErrorCode::insufficient_trajectory, "cost needs T >= 3 or a fixed K0");
  if (T < 2) throw Error(ErrorCode::insufficient_trajectory, "cost needs at least two samples");
  const double ai[] = {alpha_ini};
  const double ab[] = {alpha_bo};
  CostBreakdown out;
  out.ini_terms = exploration_terms(t, ai, cfg.n_ini_samples, cfg.seed)[0];
  if (T >= 3) {
    const BoTermEvaluator bo(t, cfg.proposal, cfg.seed);
    out.bo_terms = bo.terms(lambda, ab)[0];
  } else {
    out.bo_terms.assign(T + 1, 0.0);
  }
  const auto split = scan_k0(out.ini_terms, out.bo_terms, T, cfg.k0_fixed);
  out.cost = split.cost;
  out.k0 = split.k0;
  out.terms = contributing_terms(out.ini_terms, out.bo_terms, T, split.k0);
  return out;
}

struct CostRow {
  Vector lambda;
  double alpha_bo = 0.0;
  double alpha_ini = 0.0;
  std::size_t prefix_len = 0;
  std::size_t k0 = 0;
  double cost = 0.0;
};

struct IboResult {
  IboEstimate estimate;
  std::vector<CostRow> table;
};

inline std::string format_lambda(const Vector& lambda) {
  std::ostringstream os;
  os.precision(17);
  const bool isotropic = lambda.size() > 0 && (lambda.array() == lambda[0]).all();
  if (isotropic) {
    os << lambda[0];
  } else {
    for (Eigen::Index i = 0; i < lambda.size(); ++i) os << (i ? ";" : "") << lambda[i];
  }
  return os.str();
}

inline void write_cost_table_csv(std::ostream& os, std::span<const CostRow> rows) {
  os << "lambda,alpha_bo,alpha_ini,prefix_len,k0,cost\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << format_lambda(r.lambda) << ',' << r.alpha_bo << ',' << r.alpha_ini << ',' << r.prefix_len << ','
       << r.k0 << ',' << r.cost << '\n';
  }
}

namespace detail {

inline void require_estimable(const Trajectory& t) {
  if (t.size() < 3) {
    throw Error(ErrorCode::insufficient_trajectory,
                "inverse BO needs at least 3 samples; got " + std::to_string(t.size()),
                "T=" + std::to_string(t.size()));
  }
}

}  // namespace detail

/// Exhaustive search over lambda_grid x alpha_bo_grid x alpha_ini_values
/// with the K0 scan. The cost table covers every prefix length from
/// `min_prefix` to T; the estimate is the minimizer at full length.
inline IboResult estimate_grid(const Trajectory& trajectory, const IboConfig& cfg) {
  const Trajectory t = normalize_trajectory(trajectory);
  detail::require_estimable(t);
  cfg.validate(t.space().dim());
  const std::size_t T = t.size();
  const auto lambdas = cfg.lambda_candidates(t.space().dim());

  const auto ini = exploration_terms(t, cfg.alpha_ini_values, cfg.n_ini_samples, cfg.seed);
  const BoTermEvaluator evaluator(t, cfg.proposal, cfg.seed);
  std::vector<std::vector<std::vector<double>>> bo;  // [lambda][alpha_bo][j]
  bo.reserve(lambdas.size());
  for (const auto& l : lambdas) bo.push_back(evaluator.terms(l, cfg.alpha_bo_grid));

  IboResult result;
  const std::size_t first_prefix = std::max<std::size_t>(cfg.min_prefix, 3);
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t K = first_prefix; K <= T; ++K) {
    std::optional<std::size_t> k0 = cfg.k0_fixed;
    if (k0 && *k0 > K) continue;
    for (std::size_t ai = 0; ai < cfg.alpha_ini_values.size(); ++ai) {
      for (std::size_t li = 0; li < lambdas.size(); ++li) {
        for (std::size_t bi = 0; bi < cfg.alpha_bo_grid.size(); ++bi) {
          const auto split = scan_k0(ini[ai], bo[li][bi], K, k0);
          result.table.push_back({lambdas[li], cfg.alpha_bo_grid[bi], cfg.alpha_ini_values[ai], K, split.k0,
                                  split.cost});
          if (K == T && split.cost < best_cost) {
            best_cost = split.cost;
            auto& e = result.estimate;
            e.lambda_hat = lambdas[li];
            e.alpha_bo_hat = cfg.alpha_bo_grid[bi];
            e.alpha_ini_hat = cfg.alpha_ini_values[ai];
            e.k0_hat = split.k0;
            e.cost = split.cost;
            e.terms = contributing_terms(ini[ai], bo[li][bi], T, split.k0);
          }
        }
      }
    }
  }
  if (!std::isfinite(best_cost)) {
    throw Error(ErrorCode::invalid_argument, "fixed K0 exceeds the trajectory length");
  }
  return result;
}

/// Bounded multi-start descent over lambda in [lambda_lower, lambda_upper]^p
/// for each alpha_bo in the grid, at a fixed split K0 (default 2). The
/// descent runs on log10(lambda) with central finite differences; the
/// proposal samples are fixed for the whole search, so the objective is
/// deterministic.
inline IboResult estimate_continuous(const Trajectory& trajectory, const IboConfig& cfg) {
  const Trajectory t = normalize_trajectory(trajectory);
  detail::require_estimable(t);
  cfg.validate(t.space().dim());
  const std::size_t T = t.size();
  const std::size_t p = t.space().dim();
  const std::size_t k0 = std::min(cfg.k0_fixed.value_or(2), T);

  // The exploration part does not depend on lambda; take the best fixed alpha_ini.
  const auto ini = exploration_terms(t, cfg.alpha_ini_values, cfg.n_ini_samples, cfg.seed);
  std::size_t best_ai = 0;
  std::vector<double> ini_sum(cfg.alpha_ini_values.size(), 0.0);
  for (std::size_t a = 0; a < ini.size(); ++a) {
    for (std::size_t i = 2; i <= k0; ++i) ini_sum[a] += ini[a][i];
    if (ini_sum[a] < ini_sum[best_ai]) best_ai = a;
  }

  const BoTermEvaluator evaluator(t, cfg.proposal, cfg.seed);
  const double log_lo = std::log10(cfg.lambda_lower);
  const double log_hi = std::log10(cfg.lambda_upper);
  const SearchSpace* log_box = nullptr;
  std::optional<SearchSpace> log_box_storage;
  if (log_hi > log_lo) {
    log_box_storage.emplace(SearchSpace::cube(p, log_lo, log_hi));
    log_box = &*log_box_storage;
  }
  auto to_lambda = [](const Vector& theta) { return Vector(theta.unaryExpr([](double v) { return std::pow(10.0, v); })); };

  IboResult result;
  struct Candidate {
    Vector lambda;
    double alpha_bo = 0.0;
    double cost = std::numeric_limits<double>::infinity();
  };
  Candidate best_descent;
  Candidate best_corner;

  // Corners: isotropic box ends plus the grid candidates that lie inside the box.
  std::vector<Vector> corners = {Vector::Constant(static_cast<Eigen::Index>(p), cfg.lambda_lower),
                                 Vector::Constant(static_cast<Eigen::Index>(p), cfg.lambda_upper)};
  for (const auto& l : cfg.lambda_candidates(p)) {
    if ((l.array() >= cfg.lambda_lower).all() && (l.array() <= cfg.lambda_upper).all()) corners.push_back(l);
  }

  for (std::size_t bi = 0; bi < cfg.alpha_bo_grid.size(); ++bi) {
    const double alpha = cfg.alpha_bo_grid[bi];
    auto bo_cost = [&](const Vector& lambda) { return evaluator.bo_sum(lambda, alpha, k0 + 1); };

    for (const auto& c : corners) {
      const double cost = ini_sum[best_ai] + bo_cost(c);
      if (cost < best_corner.cost) best_corner = {c, alpha, cost};
    }
    if (!log_box) continue;  // collapsed bounds: the corner is the only point

    const Vector step = Vector::Constant(static_cast<Eigen::Index>(p), cfg.fd_step);
    auto objective = [&](const Vector& theta, Vector& grad) {
      const auto fn = [&](const Vector& th) { return bo_cost(to_lambda(log_box->clamp(th))); };
      grad = central_difference(fn, theta, step);
      return fn(theta);
    };
    const auto starts = lhs(*log_box, static_cast<std::size_t>(cfg.n_restarts),
                            derive_seed(cfg.seed, {stream::restart, bi}));
    const BoxMinimizer minimizer({.max_iterations = cfg.max_descent_iterations, .history = 8,
                                  .gradient_tolerance = 1e-8, .value_tolerance = 1e-10, .max_backtracks = 20});
    for (const auto& start : starts) {
      const auto local = minimizer.minimize(objective, start, log_box->lower(), log_box->upper());
      const double cost = ini_sum[best_ai] + local.value;
      result.table.push_back({to_lambda(local.x), alpha, cfg.alpha_ini_values[best_ai], T, k0, cost});
      if (cost < best_descent.cost) best_descent = {to_lambda(local.x), alpha, cost};
    }
  }

  auto& e = result.estimate;
  const bool use_descent = best_descent.cost < best_corner.cost;
  const Candidate& chosen = use_descent ? best_descent : best_corner;
  e.lambda_hat = chosen.lambda;
  e.alpha_bo_hat = chosen.alpha_bo;
  e.alpha_ini_hat = cfg.alpha_ini_values[best_ai];
  e.k0_hat = k0;
  e.fallback_to_corner = !use_descent && log_box != nullptr;
  const double ab[] = {chosen.alpha_bo};
  const auto bo = evaluator.terms(chosen.lambda, ab)[0];
  e.terms = contributing_terms(ini[best_ai], bo, T, k0);
  e.cost = e.terms_sum();
  if (!log_box) result.table.push_back({e.lambda_hat, e.alpha_bo_hat, e.alpha_ini_hat, T, k0, e.cost});
  return result;
}

}  // namespace strategist
