#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "strategist/acquisition.hpp"
#include "strategist/ibo.hpp"
#include "strategist/objectives.hpp"
#include "strategist/random.hpp"
#include "strategist/trajectory_io.hpp"

namespace strategist {

enum class RunState { pending, running, done, failed, interrupted };

inline std::string_view to_string(RunState s) {
  switch (s) {
    case RunState::pending: return "pending";
    case RunState::running: return "running";
    case RunState::done: return "done";
    case RunState::failed: return "failed";
    case RunState::interrupted: return "interrupted";
  }
  return "unknown";
}

inline RunState run_state_from_string(const std::string& s) {
  for (auto st : {RunState::pending, RunState::running, RunState::done, RunState::failed, RunState::interrupted}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::malformed_document, "unknown run state '" + s + "'");
}

struct StoredEstimate {
  std::string id;
  std::string mode;
  std::size_t prefix_len = 0;
  IboResult result;
};

struct RunRecord {
  std::string id;
  std::string estimate_id;
  RunState state = RunState::pending;
  std::size_t iterations = 0;
  std::size_t initial_count = 0;
  Vector lambda;
  std::vector<Sample> iterates;
  std::vector<double> best_curve;
  std::optional<Termination> terminated_by;
  std::string error;
};

namespace detail {

inline nlohmann::json estimate_to_json(const StoredEstimate& s) {
  const auto& e = s.result.estimate;
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : e.terms) {
    terms.push_back({{"kind", t.kind == TermKind::exploration ? "exploration" : "bo"}, {"index", t.index},
                     {"value", t.value}});
  }
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : s.result.table) {
    table.push_back({{"lambda", vector_to_json(r.lambda)}, {"alpha_bo", r.alpha_bo}, {"alpha_ini", r.alpha_ini},
                     {"prefix_len", r.prefix_len}, {"k0", r.k0}, {"cost", r.cost}});
  }
  return {{"estimate_id", s.id},
          {"mode", s.mode},
          {"prefix_len", s.prefix_len},
          {"lambda_hat", vector_to_json(e.lambda_hat)},
          {"alpha_bo_hat", e.alpha_bo_hat},
          {"alpha_ini_hat", e.alpha_ini_hat},
          {"k0_hat", e.k0_hat},
          {"cost", e.cost},
          {"fallback_to_corner", e.fallback_to_corner},
          {"terms", terms},
          {"table", table}};
}

inline StoredEstimate estimate_from_json(const nlohmann::json& j) {
  StoredEstimate s;
  s.id = j.at("estimate_id").get<std::string>();
  s.mode = j.at("mode").get<std::string>();
  s.prefix_len = j.at("prefix_len").get<std::size_t>();
  auto& e = s.result.estimate;
  e.lambda_hat = vector_from_json(j.at("lambda_hat"), "lambda_hat");
  e.alpha_bo_hat = j.at("alpha_bo_hat").get<double>();
  e.alpha_ini_hat = j.at("alpha_ini_hat").get<double>();
  e.k0_hat = j.at("k0_hat").get<std::size_t>();
  e.cost = j.at("cost").get<double>();
  e.fallback_to_corner = j.at("fallback_to_corner").get<bool>();
  for (const auto& t : j.at("terms")) {
    e.terms.push_back({t.at("kind") == "exploration" ? TermKind::exploration : TermKind::bo,
                       t.at("index").get<std::size_t>(), t.at("value").get<double>()});
  }
  for (const auto& r : j.at("table")) {
    s.result.table.push_back({vector_from_json(r.at("lambda"), "table.lambda"), r.at("alpha_bo").get<double>(),
                              r.at("alpha_ini").get<double>(), r.at("prefix_len").get<std::size_t>(),
                              r.at("k0").get<std::size_t>(), r.at("cost").get<double>()});
  }
  return s;
}

inline nlohmann::json run_to_json(const RunRecord& r, const std::string& session_id) {
  nlohmann::json iterates = nlohmann::json::array();
  for (const auto& s : r.iterates) iterates.push_back({{"x", vector_to_json(s.x)}, {"f", s.f}});
  nlohmann::json j = {{"run_id", r.id},
                      {"session_id", session_id},
                      {"estimate_id", r.estimate_id},
                      {"state", to_string(r.state)},
                      {"iterations", r.iterations},
                      {"current_iteration", r.iterates.size()},
                      {"initial_count", r.initial_count},
                      {"lambda", vector_to_json(r.lambda)},
                      {"iterates", iterates},
                      {"best_curve", r.best_curve}};
  j["terminated_by"] = r.terminated_by ? nlohmann::json(to_string(*r.terminated_by)) : nlohmann::json();
  j["error"] = r.error.empty() ? nlohmann::json() : nlohmann::json(r.error);
  return j;
}

inline RunRecord run_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.id = j.at("run_id").get<std::string>();
  r.estimate_id = j.at("estimate_id").get<std::string>();
  r.state = run_state_from_string(j.at("state").get<std::string>());
  r.iterations = j.at("iterations").get<std::size_t>();
  r.initial_count = j.at("initial_count").get<std::size_t>();
  r.lambda = vector_from_json(j.at("lambda"), "lambda");
  for (const auto& s : j.at("iterates")) r.iterates.push_back({vector_from_json(s.at("x"), "iterates.x"), s.at("f")});
  r.best_curve = j.at("best_curve").get<std::vector<double>>();
  if (!j.at("terminated_by").is_null()) {
    r.terminated_by = j.at("terminated_by") == "ei_below_tolerance" ? Termination::ei_below_tolerance
                                                                    : Termination::iteration_budget;
  }
  if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
  return r;
}

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error(ErrorCode::invalid_argument, "cannot write " + tmp);
    os << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline double number_field(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw Error(ErrorCode::invalid_argument, std::string(key) + " must be a number", key);
  return j[key].get<double>();
}

inline std::size_t count_field(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() || j[key].get<long long>() < 0) {
    throw Error(ErrorCode::invalid_argument, std::string(key) + " must be a nonnegative integer", key);
  }
  return j[key].get<std::size_t>();
}

inline std::vector<double> list_field(const nlohmann::json& j, const char* key, std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j[key];
  if (!v.is_array() || v.empty()) throw Error(ErrorCode::invalid_argument, std::string(key) + " must be a nonempty array", key);
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw Error(ErrorCode::invalid_argument, std::string(key) + " must hold numbers", key);
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

/// Applies request overrides to the default IBO configuration for a
/// p-dimensional session.
inline IboConfig ibo_config_from_json(const nlohmann::json& o, std::size_t dim, std::uint64_t seed) {
  if (!o.is_null() && !o.is_object()) throw Error(ErrorCode::invalid_argument, "overrides must be an object");
  const nlohmann::json j = o.is_null() ? nlohmann::json::object() : o;
  IboConfig cfg;
  cfg.seed = seed;
  cfg.alpha_bo_grid = detail::list_field(j, "alpha_bo_grid", cfg.alpha_bo_grid);
  cfg.alpha_ini_values = detail::list_field(j, "alpha_ini_values", cfg.alpha_ini_values);
  if (j.contains("lambda_grid")) {
    const auto& g = j["lambda_grid"];
    if (!g.is_array() || g.empty()) throw Error(ErrorCode::invalid_argument, "lambda_grid must be a nonempty array");
    for (const auto& item : g) {
      if (item.is_number()) {
        cfg.lambda_grid.push_back(Vector::Constant(static_cast<Eigen::Index>(dim), item.get<double>()));
      } else {
        cfg.lambda_grid.push_back(detail::vector_from_json(item, "lambda_grid"));
      }
    }
  }
  if (j.contains("lambda_bounds")) {
    const auto b = detail::list_field(j, "lambda_bounds", {});
    if (b.size() != 2) throw Error(ErrorCode::invalid_argument, "lambda_bounds must be [lower, upper]");
    cfg.lambda_lower = b[0];
    cfg.lambda_upper = b[1];
  }
  cfg.n_restarts = static_cast<int>(detail::count_field(j, "n_restarts", static_cast<std::size_t>(cfg.n_restarts)));
  cfg.max_descent_iterations =
      static_cast<int>(detail::count_field(j, "max_descent_iterations", static_cast<std::size_t>(cfg.max_descent_iterations)));
  cfg.fd_step = detail::number_field(j, "fd_step", cfg.fd_step);
  if (j.contains("k0")) cfg.k0_fixed = detail::count_field(j, "k0", 2);
  cfg.n_ini_samples = detail::count_field(j, "n_ini_samples", cfg.n_ini_samples);
  cfg.proposal.sigma = detail::number_field(j, "sigma", cfg.proposal.sigma);
  cfg.proposal.n_uniform = detail::count_field(j, "n_uniform", cfg.proposal.n_uniform);
  cfg.proposal.n_normal = detail::count_field(j, "n_normal", cfg.proposal.n_normal);
  cfg.seed = detail::count_field(j, "seed", cfg.seed);
  cfg.validate(dim);
  return cfg;
}

/// Options of a continued BO run.
struct ContinueOptions {
  /// Number of leading trials that seed the run; default all.
  std::optional<std::size_t> prefix;
  int n_starts = 100;
  /// The default runs the full budget unless EI vanishes exactly.
  double ei_tolerance = std::numeric_limits<double>::denorm_min();
};

/// Demonstration sessions: a hidden objective on [-1, 1]^2, the human's
/// trials, inverse-BO estimates, and continued BO runs. Every mutation is
/// persisted to the data directory when one is configured.
class SessionService {
 public:
  explicit SessionService(std::optional<std::filesystem::path> data_dir = std::nullopt,
                          ObjectiveRegistry registry = ObjectiveRegistry::with_defaults())
      : data_dir_(std::move(data_dir)), registry_(std::move(registry)) {
    if (data_dir_) {
      std::filesystem::create_directories(*data_dir_);
      load_all();
    }
  }

  ~SessionService() {
    std::vector<std::jthread> workers;
    {
      const std::lock_guard lock(workers_mutex_);
      workers = std::move(workers_);
    }
    for (auto& w : workers) w.request_stop();
    // jthread destructors join.
  }

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  const ObjectiveRegistry& registry() const { return registry_; }

  nlohmann::json create_session(const std::string& objective_name, std::uint64_t seed) {
    const auto& obj = registry_.get(objective_name);
    auto s = std::make_shared<Session>(obj.space());
    s->id = new_id("s");
    s->objective = objective_name;
    s->seed = seed;
    s->created_at = detail::utc_now();
    {
      const std::unique_lock lock(s->mutex);
      persist(*s);
    }
    {
      const std::unique_lock lock(index_mutex_);
      sessions_[s->id] = s;
    }
    return {{"id", s->id}, {"objective", objective_name}, {"space", space_to_json(obj.space())},
            {"created_at", s->created_at}};
  }

  /// Scores x and appends it. Returns {f, trial_index} (1-based).
  nlohmann::json evaluate(const std::string& id, const Vector& x) {
    auto s = session(id);
    const auto& obj = registry_.get(s->objective);
    const std::unique_lock lock(s->mutex);
    if (static_cast<std::size_t>(x.size()) != s->trajectory.space().dim()) {
      throw Error(ErrorCode::dimension_mismatch, "x must have length " + std::to_string(s->trajectory.space().dim()));
    }
    for (Eigen::Index a = 0; a < x.size(); ++a) {
      if (!(x[a] >= -1.0 && x[a] <= 1.0)) {
        throw Error(ErrorCode::out_of_bounds, "x[" + std::to_string(a) + "] is outside [-1, 1]",
                    "axis=" + std::to_string(a));
      }
    }
    for (std::size_t i = 0; i < s->trajectory.size(); ++i) {
      if (s->trajectory[i].x == x) {
        throw Error(ErrorCode::duplicate_sample,
                    "x repeats trial " + std::to_string(i + 1) + "; perturb the point slightly and resubmit",
                    "trial_index=" + std::to_string(i + 1));
      }
    }
    const double f = obj(x);
    s->trajectory.append({x, f});
    persist(*s);
    return {{"f", f}, {"trial_index", s->trajectory.size()}};
  }

  /// Inverse BO on the session trajectory (or its first `prefix` trials).
  /// Runs on the caller's thread against a snapshot; the session stays
  /// available to other requests meanwhile.
  nlohmann::json run_ibo(const std::string& id, const std::string& mode, const nlohmann::json& overrides) {
    if (mode != "grid" && mode != "continuous") {
      throw Error(ErrorCode::invalid_argument, "mode must be 'grid' or 'continuous'", mode);
    }
    auto s = session(id);
    Trajectory snapshot(SearchSpace::unit(1));
    std::size_t n_estimates = 0;
    {
      const std::shared_lock lock(s->mutex);
      snapshot = s->trajectory;
      n_estimates = s->estimates.size();
    }
    const nlohmann::json o = overrides.is_null() ? nlohmann::json::object() : overrides;
    if (!o.is_object()) throw Error(ErrorCode::invalid_argument, "overrides must be an object");
    const std::size_t prefix = detail::count_field(o, "prefix", snapshot.size());
    if (prefix > snapshot.size()) throw Error(ErrorCode::invalid_argument, "prefix exceeds the trajectory length");
    snapshot = snapshot.prefix(prefix);
    if (snapshot.size() < 3) {
      throw Error(ErrorCode::insufficient_trajectory,
                  "inverse BO needs at least 3 trials; submit more trials first",
                  "T=" + std::to_string(snapshot.size()));
    }
    nlohmann::json ibo_overrides = o;
    ibo_overrides.erase("prefix");
    const auto cfg = ibo_config_from_json(ibo_overrides, snapshot.space().dim(),
                                          derive_seed(s->seed, {stream::ibo, n_estimates}));

    StoredEstimate est;
    est.mode = mode;
    est.prefix_len = snapshot.size();
    est.result = mode == "grid" ? estimate_grid(snapshot, cfg) : estimate_continuous(snapshot, cfg);

    const std::unique_lock lock(s->mutex);
    est.id = s->id + "-e" + std::to_string(s->estimates.size() + 1);
    s->estimates.push_back(est);
    persist(*s);
    return detail::estimate_to_json(est);
  }

  using ContinueOptions = strategist::ContinueOptions;

  /// Starts BO from the session trajectory with the estimate's lambda.
  /// Returns {run_id}; the run proceeds on a background thread.
  nlohmann::json continue_bo(const std::string& id, const std::string& estimate_id, std::size_t iterations,
                             const ContinueOptions& opt = {}) {
    if (iterations < 1) throw Error(ErrorCode::invalid_argument, "iterations must be >= 1");
    if (opt.n_starts < 1) throw Error(ErrorCode::invalid_argument, "n_starts must be >= 1");
    if (!(opt.ei_tolerance > 0.0)) throw Error(ErrorCode::invalid_argument, "ei_tolerance must be positive");
    auto s = session(id);
    const std::unique_lock lock(s->mutex);
    const StoredEstimate* est = nullptr;
    for (const auto& e : s->estimates) {
      if (e.id == estimate_id) est = &e;
    }
    if (!est) throw Error(ErrorCode::unknown_id, "unknown estimate '" + estimate_id + "'", estimate_id);
    for (const auto& r : s->runs) {
      if (r.state == RunState::pending || r.state == RunState::running) {
        throw Error(ErrorCode::conflict, "session already has an active run", r.id);
      }
    }
    const std::size_t n = opt.prefix.value_or(s->trajectory.size());
    if (n > s->trajectory.size()) throw Error(ErrorCode::invalid_argument, "prefix exceeds the trajectory length");
    if (n < 2) throw Error(ErrorCode::insufficient_trajectory, "continuation needs at least 2 trials");

    RunRecord run;
    run.id = s->id + "-r" + std::to_string(s->runs.size() + 1);
    run.estimate_id = estimate_id;
    run.iterations = iterations;
    run.initial_count = n;
    run.lambda = est->result.estimate.lambda_hat;
    const Trajectory initial = s->trajectory.prefix(n);
    run.best_curve = {initial.best_value()};
    s->runs.push_back(run);
    persist(*s);
    {
      const std::unique_lock ilock(index_mutex_);
      run_index_[run.id] = s->id;
    }

    const BoParams params{run.lambda, opt.ei_tolerance, opt.n_starts};
    const auto seed = derive_seed(s->seed, {stream::continuation, s->runs.size()});
    const auto& obj = registry_.get(s->objective);
    const std::string run_id = run.id;
    std::jthread worker([this, s, initial, params, iterations, seed, &obj, run_id](std::stop_token stop) {
      execute_run(s, run_id, initial, params, iterations, seed, obj, stop);
    });
    const std::lock_guard wlock(workers_mutex_);
    workers_.push_back(std::move(worker));
    return {{"run_id", run_id}};
  }

  nlohmann::json get_state(const std::string& id) const {
    auto s = session(id);
    const std::shared_lock lock(s->mutex);
    return snapshot(*s);
  }

  nlohmann::json get_run(const std::string& run_id) const {
    auto s = session_of_run(run_id);
    const std::shared_lock lock(s->mutex);
    return detail::run_to_json(find_run(*s, run_id), s->id);
  }

  /// Blocks until the run leaves the pending/running states or the timeout
  /// elapses. Returns the final snapshot.
  nlohmann::json wait_for_run(const std::string& run_id,
                              std::chrono::milliseconds timeout = std::chrono::minutes(10)) const {
    auto s = session_of_run(run_id);
    std::unique_lock lock(s->mutex);
    s->changed.wait_for(lock, timeout, [&] {
      const auto st = find_run(*s, run_id).state;
      return st != RunState::pending && st != RunState::running;
    });
    return detail::run_to_json(find_run(*s, run_id), s->id);
  }

  std::vector<std::string> session_ids() const {
    const std::shared_lock lock(index_mutex_);
    std::vector<std::string> out;
    for (const auto& [k, v] : sessions_) out.push_back(k);
    return out;
  }

 private:
  struct Session {
    explicit Session(SearchSpace space) : trajectory(std::move(space)) {}
    std::string id;
    std::string objective;
    std::uint64_t seed = 0;
    std::string created_at;
    Trajectory trajectory;
    std::vector<StoredEstimate> estimates;
    std::vector<RunRecord> runs;
    mutable std::shared_mutex mutex;
    mutable std::condition_variable_any changed;
  };

  /// Thrown from the progress observer to stop a run on shutdown.
  struct Stopped {};

  void execute_run(const std::shared_ptr<Session>& s, const std::string& run_id, const Trajectory& initial,
                   const BoParams& params, std::size_t iterations, std::uint64_t seed,
                   const NormalizedObjective& obj, std::stop_token stop) {
    auto update = [&](auto&& fn) {
      {
        const std::unique_lock lock(s->mutex);
        fn(find_run(*s, run_id));
        persist(*s);
      }
      s->changed.notify_all();
    };
    update([](RunRecord& r) { r.state = RunState::running; });
    BoRunOptions options;
    options.observer = [&](const BoRunRecord& rec) {
      update([&](RunRecord& r) {
        const auto& last = rec.trajectory[rec.trajectory.size() - 1];
        r.iterates.push_back(last);
        r.best_curve = rec.best_curve;
      });
      if (stop.stop_requested()) throw Stopped{};
    };
    try {
      const auto rec = run_bo(initial, params, std::cref(obj), iterations, seed, options);
      update([&](RunRecord& r) {
        r.state = RunState::done;
        r.terminated_by = rec.terminated_by;
        r.best_curve = rec.best_curve;
      });
    } catch (const Stopped&) {
      update([](RunRecord& r) { r.state = RunState::interrupted; });
    } catch (const std::exception& e) {
      update([&](RunRecord& r) {
        r.state = RunState::failed;
        r.error = e.what();
      });
    }
  }

  std::shared_ptr<Session> session(const std::string& id) const {
    const std::shared_lock lock(index_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::unknown_id, "unknown session '" + id + "'", id);
    return it->second;
  }

  std::shared_ptr<Session> session_of_run(const std::string& run_id) const {
    std::string sid;
    {
      const std::shared_lock lock(index_mutex_);
      const auto it = run_index_.find(run_id);
      if (it == run_index_.end()) throw Error(ErrorCode::unknown_id, "unknown run '" + run_id + "'", run_id);
      sid = it->second;
    }
    return session(sid);
  }

  static RunRecord& find_run(Session& s, const std::string& run_id) {
    for (auto& r : s.runs) {
      if (r.id == run_id) return r;
    }
    throw Error(ErrorCode::unknown_id, "unknown run '" + run_id + "'", run_id);
  }

  static const RunRecord& find_run(const Session& s, const std::string& run_id) {
    return find_run(const_cast<Session&>(s), run_id);
  }

  static nlohmann::json snapshot(const Session& s) {
    nlohmann::json estimates = nlohmann::json::array();
    for (const auto& e : s.estimates) estimates.push_back(detail::estimate_to_json(e));
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : s.runs) runs.push_back(detail::run_to_json(r, s.id));
    return {{"id", s.id},
            {"objective", s.objective},
            {"seed", s.seed},
            {"created_at", s.created_at},
            {"space", space_to_json(s.trajectory.space())},
            {"trajectory", trajectory_to_json(s.trajectory)},
            {"estimates", estimates},
            {"runs", runs}};
  }

  /// Caller holds the session's exclusive lock.
  void persist(const Session& s) const {
    if (!data_dir_) return;
    nlohmann::json meta = snapshot(s);
    meta.erase("trajectory");
    detail::write_atomically(*data_dir_ / (s.id + ".trajectory.json"), trajectory_to_json(s.trajectory).dump(2));
    detail::write_atomically(*data_dir_ / (s.id + ".meta.json"), meta.dump(2));
  }

  void load_all() {
    for (const auto& entry : std::filesystem::directory_iterator(*data_dir_)) {
      const std::string name = entry.path().filename().string();
      const std::string suffix = ".meta.json";
      if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        continue;
      }
      std::ifstream is(entry.path());
      nlohmann::json meta;
      try {
        meta = nlohmann::json::parse(is);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_document, entry.path().string() + ": " + e.what());
      }
      const std::string id = meta.at("id").get<std::string>();
      Trajectory t = load_trajectory(*data_dir_ / (id + ".trajectory.json"));
      auto s = std::make_shared<Session>(t.space());
      s->trajectory = std::move(t);
      s->id = id;
      s->objective = meta.at("objective").get<std::string>();
      s->seed = meta.at("seed").get<std::uint64_t>();
      s->created_at = meta.at("created_at").get<std::string>();
      for (const auto& e : meta.at("estimates")) s->estimates.push_back(detail::estimate_from_json(e));
      bool changed = false;
      for (const auto& r : meta.at("runs")) {
        auto run = detail::run_from_json(r);
        if (run.state == RunState::pending || run.state == RunState::running) {
          run.state = RunState::interrupted;
          changed = true;
        }
        run_index_[run.id] = id;
        s->runs.push_back(std::move(run));
      }
      if (changed) persist(*s);
      sessions_[id] = s;
    }
  }

  std::string new_id(const std::string& prefix) {
    const std::lock_guard lock(id_mutex_);
    static constexpr char hex[] = "0123456789abcdef";
    for (;;) {
      std::string id = prefix;
      for (int i = 0; i < 16; ++i) id += hex[id_rng_() & 15u];
      const std::shared_lock ilock(index_mutex_);
      if (!sessions_.contains(id)) return id;
    }
  }

  std::optional<std::filesystem::path> data_dir_;
  ObjectiveRegistry registry_;
  mutable std::shared_mutex index_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::string> run_index_;
  std::mutex id_mutex_;
  std::mt19937_64 id_rng_{std::random_device{}()};
  std::mutex workers_mutex_;
  std::vector<std::jthread> workers_;
};

}  // namespace strategist
