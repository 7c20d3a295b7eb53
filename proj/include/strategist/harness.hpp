#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "strategist/acquisition.hpp"
#include "strategist/gp.hpp"
#include "strategist/ibo.hpp"
#include "strategist/objectives.hpp"
#include "strategist/random.hpp"
#include "strategist/sampling.hpp"
#include "strategist/trajectory_io.hpp"
#include "strategist/version.hpp"

namespace strategist {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once; the first exception is rethrown after all workers
/// finish.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            const std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

struct BootstrapBand {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Mean of `samples` with a one-sigma band: mean -/+ the standard deviation
/// of `n_boot` resampled means.
inline BootstrapBand bootstrap_ci(std::span<const double> samples, std::size_t n_boot, std::uint64_t seed) {
  if (samples.empty()) throw Error(ErrorCode::invalid_argument, "bootstrap needs at least one sample");
  if (n_boot == 0) throw Error(ErrorCode::invalid_argument, "n_boot must be >= 1");
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<double> means(n_boot);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) s += samples[pick(rng)];
    m = s / static_cast<double>(samples.size());
  }
  double mm = 0.0;
  for (double m : means) mm += m;
  mm /= static_cast<double>(n_boot);
  double var = 0.0;
  for (double m : means) var += (m - mm) * (m - mm);
  const double sd = std::sqrt(var / static_cast<double>(n_boot));
  return {mean, mean - sd, mean + sd};
}

struct StudyConfig {
  std::size_t dim = 30;
  /// Raw domain is [-bound, bound]^dim; studies run on its [-1, 1]^dim image.
  double bound = 2.0;
  std::vector<double> lambda_cases{0.01, 0.1, 1.0, 10.0};
  std::size_t trials = 30;
  std::size_t prefix_min = 5;
  std::size_t prefix_max = 20;
  std::size_t bo_init = 10;
  double ei_tolerance = 1e-3;
  int n_starts = 100;
  std::size_t n_bootstrap = 5000;
  std::uint64_t seed = 0;

  std::size_t transfer_iterations = 50;
  /// BO iterations in the donor trajectory of the transfer arm.
  std::size_t donor_iterations = 10;
  double donor_lambda = 0.01;
  double transfer_start_lambda = 10.0;
  /// Iteration at which the transfer arm switches to the donor estimate.
  std::size_t transfer_switch_iter = 0;

  IboConfig ibo;
  unsigned threads = 0;

  static StudyConfig smoke() {
    StudyConfig c;
    c.dim = 2;
    c.trials = 2;
    c.prefix_min = 5;
    c.prefix_max = 8;
    c.bo_init = 3;
    c.n_starts = 10;
    c.n_bootstrap = 200;
    c.transfer_iterations = 8;
    c.donor_iterations = 5;
    c.ibo.n_ini_samples = 1000;
    c.ibo.proposal.n_uniform = 500;
    c.ibo.proposal.n_normal = 500;
    return c;
  }

  void validate() const {
    if (dim < 1) throw Error(ErrorCode::invalid_argument, "dim must be >= 1");
    if (!(bound > 0.0)) throw Error(ErrorCode::invalid_argument, "bound must be positive");
    if (trials < 2) throw Error(ErrorCode::invalid_argument, "trials must be >= 2");
    if (bo_init < 2) throw Error(ErrorCode::invalid_argument, "bo_init must be >= 2");
    if (prefix_min < 3 || prefix_max < prefix_min) {
      throw Error(ErrorCode::invalid_argument, "prefix lengths must satisfy 3 <= min <= max");
    }
    if (lambda_cases.empty()) throw Error(ErrorCode::invalid_argument, "lambda_cases must be nonempty");
    if (n_bootstrap < 1) throw Error(ErrorCode::invalid_argument, "n_bootstrap must be >= 1");
    ibo.validate(dim);
  }

  SearchSpace space() const { return SearchSpace::unit(dim); }
  SearchSpace raw_space() const { return SearchSpace::cube(dim, -bound, bound); }
  Objective objective() const {
    const double s = bound;
    return [s](const Vector& x) { return rosenbrock(s * x); };
  }
  BoParams params(const Vector& lambda) const { return {lambda, ei_tolerance, n_starts}; }
  Vector iso(double v) const { return Vector::Constant(static_cast<Eigen::Index>(dim), v); }
};

inline nlohmann::json to_json(const StudyConfig& c) {
  std::vector<std::vector<double>> grid;
  for (const auto& l : c.ibo.lambda_candidates(c.dim)) grid.emplace_back(l.data(), l.data() + l.size());
  return {
      {"dim", c.dim},
      {"bounds", {-c.bound, c.bound}},
      {"lambda_cases", c.lambda_cases},
      {"trials", c.trials},
      {"prefix_lengths", {c.prefix_min, c.prefix_max}},
      {"bo_init", c.bo_init},
      {"ei_tolerance", c.ei_tolerance},
      {"n_starts", c.n_starts},
      {"n_bootstrap", c.n_bootstrap},
      {"seed", c.seed},
      {"transfer_iterations", c.transfer_iterations},
      {"donor_iterations", c.donor_iterations},
      {"donor_lambda", c.donor_lambda},
      {"transfer_start_lambda", c.transfer_start_lambda},
      {"transfer_switch_iter", c.transfer_switch_iter},
      {"ibo",
       {{"alpha_bo_grid", c.ibo.alpha_bo_grid},
        {"alpha_ini_values", c.ibo.alpha_ini_values},
        {"lambda_grid", grid},
        {"n_ini_samples", c.ibo.n_ini_samples},
        {"proposal",
         {{"sigma", c.ibo.proposal.sigma},
          {"n_uniform", c.ibo.proposal.n_uniform},
          {"n_normal", c.ibo.proposal.n_normal}}}}},
  };
}

inline nlohmann::json versions_json() {
  return {{"strategist", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__},
          {"cplusplus", __cplusplus}};
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
  os.precision(17);
  return os;
}

inline void write_meta(const std::filesystem::path& dir, const std::string& study, const StudyConfig& cfg,
                       nlohmann::json extra) {
  nlohmann::json meta = {{"study", study}, {"config", to_json(cfg)}, {"versions", versions_json()}};
  meta.update(extra);
  auto os = open_out(dir / "meta.json");
  os << meta.dump(2) << '\n';
}

/// Initial design of trial `trial`; shared by every case and arm.
inline Trajectory initial_design(const StudyConfig& cfg, const Objective& f, std::size_t trial) {
  Trajectory t(cfg.space());
  for (auto& x : lhs(cfg.space(), cfg.bo_init, derive_seed(cfg.seed, {stream::initial_design, trial}))) {
    const double v = f(x);
    t.append({std::move(x), v});
  }
  return t;
}

}  // namespace detail

/// Minimal L of one trial for a (prefix, lambda_hat, alpha_ini) cell,
/// minimized over alpha_bo and K0.
struct RecoveryRecord {
  std::size_t case_index = 0;
  std::size_t trial = 0;
  std::size_t prefix_len = 0;
  std::size_t lambda_index = 0;
  double alpha_ini = 0.0;
  double cost = 0.0;
  double alpha_bo = 0.0;
  std::size_t k0 = 0;
};

struct RecoveryReport {
  std::vector<double> lambda_cases;
  std::vector<Vector> lambda_grid;
  std::vector<double> alpha_ini_values;
  std::vector<RecoveryRecord> records;
  /// Trajectory length per (case, trial); zero for failed trials.
  std::vector<std::vector<std::size_t>> lengths;
  std::size_t failed_trials = 0;

  /// Minimal L of (case, trial, prefix, lambda) over alpha_ini as well;
  /// nullopt when the trial has no such prefix.
  std::optional<double> best_cost(std::size_t c, std::size_t trial, std::size_t prefix, std::size_t lambda_index,
                                  std::optional<double> alpha_ini = std::nullopt) const {
    std::optional<double> best;
    for (const auto& r : records) {
      if (r.case_index != c || r.trial != trial || r.prefix_len != prefix || r.lambda_index != lambda_index) continue;
      if (alpha_ini && r.alpha_ini != *alpha_ini) continue;
      if (!best || r.cost < *best) best = r.cost;
    }
    return best;
  }

  /// Index of the candidate with the lowest minimal L; ties go to the
  /// earlier grid entry.
  std::optional<std::size_t> selected(std::size_t c, std::size_t trial, std::size_t prefix,
                                      std::optional<double> alpha_ini = std::nullopt) const {
    std::optional<std::size_t> arg;
    double best = 0.0;
    for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
      const auto v = best_cost(c, trial, prefix, l, alpha_ini);
      if (v && (!arg || *v < best)) {
        arg = l;
        best = *v;
      }
    }
    return arg;
  }
};

/// One BO trajectory per (lambda case, trial) on the scaled Rosenbrock
/// function, then the grid inverse-BO cost for every prefix length.
inline RecoveryReport recovery_study(const StudyConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  const Objective f = cfg.objective();
  RecoveryReport report;
  report.lambda_cases = cfg.lambda_cases;
  report.lambda_grid = cfg.ibo.lambda_candidates(cfg.dim);
  report.alpha_ini_values = cfg.ibo.alpha_ini_values;
  const std::size_t n_cases = cfg.lambda_cases.size();
  report.lengths.assign(n_cases, std::vector<std::size_t>(cfg.trials, 0));

  if (out_dir) std::filesystem::create_directories(*out_dir / "trajectories");

  std::vector<std::vector<RecoveryRecord>> per_job(n_cases * cfg.trials);
  std::vector<std::string> failures(per_job.size());
  parallel_for(
      per_job.size(),
      [&](std::size_t job) {
        const std::size_t c = job / cfg.trials;
        const std::size_t trial = job % cfg.trials;
        try {
          const Trajectory init = detail::initial_design(cfg, f, trial);
          const std::size_t iters = cfg.prefix_max > cfg.bo_init ? cfg.prefix_max - cfg.bo_init : 0;
          const auto run = run_bo(init, cfg.params(cfg.iso(cfg.lambda_cases[c])), f, iters,
                                  derive_seed(cfg.seed, {stream::trial, c, trial}));
          const Trajectory& t = run.trajectory;
          report.lengths[c][trial] = t.size();
          if (out_dir) {
            save_trajectory(denormalize_trajectory(t, cfg.raw_space()),
                            *out_dir / "trajectories" /
                                ("case" + std::to_string(c) + "_trial" + std::to_string(trial) + ".json"));
          }
          if (t.size() < cfg.prefix_min) return;
          IboConfig ibo = cfg.ibo;
          ibo.min_prefix = cfg.prefix_min;
          ibo.seed = derive_seed(cfg.seed, {stream::ibo, c, trial});
          const auto res = estimate_grid(t, ibo);

          // Minimum over alpha_bo for each (prefix, lambda, alpha_ini).
          std::map<std::tuple<std::size_t, std::size_t, std::size_t>, RecoveryRecord> cells;
          for (const auto& row : res.table) {
            std::size_t li = 0;
            while (li < report.lambda_grid.size() && report.lambda_grid[li] != row.lambda) ++li;
            std::size_t ai = 0;
            while (cfg.ibo.alpha_ini_values[ai] != row.alpha_ini) ++ai;
            const auto key = std::make_tuple(row.prefix_len, li, ai);
            const RecoveryRecord rec{c, trial, row.prefix_len, li, row.alpha_ini, row.cost, row.alpha_bo, row.k0};
            auto [it, inserted] = cells.try_emplace(key, rec);
            if (!inserted && row.cost < it->second.cost) it->second = rec;
          }
          for (auto& [k, v] : cells) per_job[job].push_back(v);
        } catch (const std::exception& e) {
          report.lengths[c][trial] = 0;
          per_job[job].clear();
          failures[job] = e.what();
        }
      },
      cfg.threads);

  nlohmann::json failure_list = nlohmann::json::array();
  for (std::size_t job = 0; job < per_job.size(); ++job) {
    if (!failures[job].empty()) {
      ++report.failed_trials;
      failure_list.push_back({{"case", job / cfg.trials}, {"trial", job % cfg.trials}, {"error", failures[job]}});
    }
    report.records.insert(report.records.end(), per_job[job].begin(), per_job[job].end());
  }
  if (!out_dir) return report;

  const auto& dir = *out_dir;
  {
    auto os = detail::open_out(dir / "trials.csv");
    os << "case,trial,prefix_len,lambda_hat,alpha_ini,L,alpha_bo,k0\n";
    for (const auto& r : report.records) {
      os << cfg.lambda_cases[r.case_index] << ',' << r.trial << ',' << r.prefix_len << ','
         << format_lambda(report.lambda_grid[r.lambda_index]) << ',' << r.alpha_ini << ',' << r.cost << ','
         << r.alpha_bo << ',' << r.k0 << '\n';
    }
  }

  // alpha_ini column: each fixed value, then "min" (minimum over the values).
  std::vector<std::optional<double>> alpha_cols;
  for (double a : cfg.ibo.alpha_ini_values) alpha_cols.emplace_back(a);
  alpha_cols.emplace_back(std::nullopt);
  auto alpha_label = [](const std::optional<double>& a) {
    if (!a) return std::string("min");
    std::ostringstream s;
    s.precision(17);
    s << *a;
    return s.str();
  };

  auto curves = detail::open_out(dir / "curves.csv");
  curves << "case,prefix_len,lambda_hat,alpha_ini,mean_L,sd_L\n";
  auto recovery = detail::open_out(dir / "recovery.csv");
  recovery << "case,prefix_len,alpha_ini,lambda_hat,selection_rate,n_trials\n";
  for (std::size_t c = 0; c < n_cases; ++c) {
    for (std::size_t K = cfg.prefix_min; K <= cfg.prefix_max; ++K) {
      for (const auto& a : alpha_cols) {
        std::vector<std::size_t> picks(report.lambda_grid.size(), 0);
        std::size_t n = 0;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
          if (const auto s = report.selected(c, trial, K, a)) {
            ++picks[*s];
            ++n;
          }
        }
        for (std::size_t l = 0; l < report.lambda_grid.size(); ++l) {
          std::vector<double> v;
          for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
            if (const auto x = report.best_cost(c, trial, K, l, a)) v.push_back(*x);
          }
          if (!v.empty()) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
            curves << cfg.lambda_cases[c] << ',' << K << ',' << format_lambda(report.lambda_grid[l]) << ','
                   << alpha_label(a) << ',' << mean << ',' << sd << '\n';
          }
          if (n > 0) {
            recovery << cfg.lambda_cases[c] << ',' << K << ',' << alpha_label(a) << ','
                     << format_lambda(report.lambda_grid[l]) << ','
                     << static_cast<double>(picks[l]) / static_cast<double>(n) << ',' << n << '\n';
          }
        }
      }
    }
  }
  detail::write_meta(dir, "recover", cfg, {{"failed_trials", report.failed_trials}, {"failures", failure_list}});
  return report;
}

enum class Arm { fixed_small, fixed_large, self_adaptive, transfer };

inline constexpr Arm kArms[] = {Arm::fixed_small, Arm::fixed_large, Arm::self_adaptive, Arm::transfer};

inline std::string_view to_string(Arm a) {
  switch (a) {
    case Arm::fixed_small: return "fixed_small";
    case Arm::fixed_large: return "fixed_large";
    case Arm::self_adaptive: return "self_adaptive";
    case Arm::transfer: return "transfer";
  }
  return "unknown";
}

struct TransferReport {
  /// best[arm][trial][iter], iter 0 = best of the initial design.
  std::vector<std::vector<std::vector<double>>> best;
  /// Self-adaptive arm: lambda used at each iteration of each trial.
  std::vector<std::vector<double>> selected_lambda;
  /// Donor estimate per trial.
  std::vector<IboEstimate> donor_estimates;
  std::size_t failed_trials = 0;

  std::vector<double> at(Arm arm, std::size_t iter) const {
    std::vector<double> v;
    for (const auto& trial : best[static_cast<std::size_t>(arm)]) {
      if (!trial.empty()) v.push_back(trial[iter]);
    }
    return v;
  }
};

/// Four BO arms from a shared initial design per trial: fixed small lambda,
/// fixed large lambda, per-iteration grid MLE of lambda, and a switch to the
/// lambda that inverse BO estimates from a donor trajectory.
inline TransferReport transfer_study(const StudyConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  const Objective f = cfg.objective();
  const auto grid = cfg.ibo.lambda_candidates(cfg.dim);
  const std::size_t iters = cfg.transfer_iterations;

  TransferReport report;
  report.best.assign(4, std::vector<std::vector<double>>(cfg.trials));
  report.selected_lambda.assign(cfg.trials, {});
  report.donor_estimates.assign(cfg.trials, {});
  std::vector<std::string> failures(cfg.trials);

  // Running best padded to the full budget when a run stops early.
  auto padded = [iters](const BoRunRecord& rec) {
    std::vector<double> c = rec.best_curve;
    c.resize(iters + 1, c.back());
    return c;
  };

  parallel_for(
      cfg.trials,
      [&](std::size_t trial) {
        try {
          const Trajectory init = detail::initial_design(cfg, f, trial);
          const auto run_seed = derive_seed(cfg.seed, {stream::trial, trial});

          report.best[0][trial] = padded(run_bo(init, cfg.params(cfg.iso(cfg.donor_lambda)), f, iters, run_seed));
          report.best[1][trial] = padded(run_bo(init, cfg.params(cfg.iso(cfg.transfer_start_lambda)), f, iters, run_seed));

          const Vector start = grid[trial % grid.size()];
          BoRunOptions adaptive;
          adaptive.lambda_policy = [&](const Trajectory& h, std::size_t it) -> Vector {
            if (it == 0) return start;
            return mle_lambda(h.inputs(), h.values(), grid);
          };
          const auto c_run = run_bo(init, cfg.params(start), f, iters, run_seed, adaptive);
          report.best[2][trial] = padded(c_run);
          for (const auto& l : c_run.lambdas) report.selected_lambda[trial].push_back(l[0]);

          // Donor: a separate trajectory generated with the small lambda.
          Trajectory donor_init(cfg.space());
          for (auto& x : lhs(cfg.space(), cfg.bo_init, derive_seed(cfg.seed, {stream::initial_design, trial, 1}))) {
            const double v = f(x);
            donor_init.append({std::move(x), v});
          }
          const auto donor = run_bo(donor_init, cfg.params(cfg.iso(cfg.donor_lambda)), f, cfg.donor_iterations,
                                    derive_seed(cfg.seed, {stream::trial, trial, 1}));
          IboConfig ibo = cfg.ibo;
          ibo.seed = derive_seed(cfg.seed, {stream::ibo, trial});
          const auto est = estimate_grid(donor.trajectory, ibo).estimate;
          report.donor_estimates[trial] = est;

          BoRunOptions transfer;
          const Vector large = cfg.iso(cfg.transfer_start_lambda);
          transfer.lambda_policy = [&](const Trajectory&, std::size_t it) -> Vector {
            return it < cfg.transfer_switch_iter ? large : est.lambda_hat;
          };
          report.best[3][trial] = padded(run_bo(init, cfg.params(large), f, iters, run_seed, transfer));
        } catch (const std::exception& e) {
          for (auto& arm : report.best) arm[trial].clear();
          failures[trial] = e.what();
        }
      },
      cfg.threads);

  nlohmann::json failure_list = nlohmann::json::array();
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    if (!failures[trial].empty()) {
      ++report.failed_trials;
      failure_list.push_back({{"trial", trial}, {"error", failures[trial]}});
    }
  }
  if (!out_dir) return report;

  const auto& dir = *out_dir;
  std::filesystem::create_directories(dir);
  {
    auto os = detail::open_out(dir / "convergence.csv");
    os << "arm,iter,mean_best,lo,hi\n";
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t it = 0; it <= iters; ++it) {
        const auto v = report.at(kArms[a], it);
        if (v.empty()) continue;
        const auto band = bootstrap_ci(v, cfg.n_bootstrap, derive_seed(cfg.seed, {stream::bootstrap, a, it}));
        os << to_string(kArms[a]) << ',' << it << ',' << band.mean << ',' << band.lo << ',' << band.hi << '\n';
      }
    }
  }
  {
    auto os = detail::open_out(dir / "trials.csv");
    os << "arm,trial,iter,best\n";
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const auto& curve = report.best[a][trial];
        for (std::size_t it = 0; it < curve.size(); ++it) {
          os << to_string(kArms[a]) << ',' << trial << ',' << it << ',' << curve[it] << '\n';
        }
      }
    }
  }
  {
    auto os = detail::open_out(dir / "selection.csv");
    os << "iter,lambda,count\n";
    for (std::size_t it = 0; it < iters; ++it) {
      std::map<double, std::size_t> counts;
      for (const auto& l : grid) counts[l[0]] = 0;
      for (const auto& trial : report.selected_lambda) {
        if (it < trial.size()) ++counts[trial[it]];
      }
      for (const auto& [l, n] : counts) os << it << ',' << l << ',' << n << '\n';
    }
  }
  {
    auto os = detail::open_out(dir / "donors.csv");
    os << "trial,lambda_hat,alpha_bo,alpha_ini,k0,cost\n";
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
      if (!failures[trial].empty()) continue;
      const auto& e = report.donor_estimates[trial];
      os << trial << ',' << format_lambda(e.lambda_hat) << ',' << e.alpha_bo_hat << ',' << e.alpha_ini_hat << ','
         << e.k0_hat << ',' << e.cost << '\n';
    }
  }
  detail::write_meta(dir, "transfer", cfg, {{"failed_trials", report.failed_trials}, {"failures", failure_list}});
  return report;
}

}  // namespace strategist
