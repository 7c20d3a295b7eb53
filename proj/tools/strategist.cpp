#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "strategist/harness.hpp"
#include "strategist/http_server.hpp"
#include "strategist/ibo.hpp"
#include "strategist/service.hpp"
#include "strategist/trajectory_io.hpp"
#include "strategist/version.hpp"

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void add_study_options(CLI::App* cmd, std::size_t& dim, std::size_t& trials, std::uint64_t& seed, std::string& out,
                       bool& smoke, unsigned& threads) {
  cmd->add_option("--dim", dim, "Problem dimension");
  cmd->add_option("--trials", trials, "Independent trials");
  cmd->add_option("--seed", seed, "Base seed");
  cmd->add_option("--out", out, "Output directory")->required();
  cmd->add_flag("--smoke", smoke, "Small configuration for a quick pipeline check");
  cmd->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
}

strategist::StudyConfig study_config(CLI::App* cmd, std::size_t dim, std::size_t trials, std::uint64_t seed,
                                     bool smoke, unsigned threads) {
  auto cfg = smoke ? strategist::StudyConfig::smoke() : strategist::StudyConfig{};
  if (cmd->count("--dim")) cfg.dim = dim;
  if (cmd->count("--trials")) cfg.trials = trials;
  cfg.seed = seed;
  cfg.threads = threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian optimization and inverse Bayesian optimization toolkit"};
  app.set_version_flag("--version", std::string(strategist::kVersion));
  app.require_subcommand(1);

  std::size_t dim = 30;
  std::size_t trials = 30;
  std::uint64_t seed = 0;
  std::string out;
  bool smoke = false;
  unsigned threads = 0;

  auto* recover = app.add_subcommand("recover", "Parameter-recovery study");
  add_study_options(recover, dim, trials, seed, out, smoke, threads);
  auto* transfer = app.add_subcommand("transfer", "Transfer versus self-adaptation study");
  add_study_options(transfer, dim, trials, seed, out, smoke, threads);
  std::size_t iterations = 0;
  transfer->add_option("--iterations", iterations, "BO iterations per arm");

  auto* serve = app.add_subcommand("serve", "Run the session HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Listen port");

  auto* estimate = app.add_subcommand("estimate", "Inverse BO on a trajectory file");
  std::string input;
  std::string mode = "grid";
  std::string table_path;
  std::uint64_t est_seed = 0;
  estimate->add_option("trajectory", input, "Trajectory JSON document")->required()->check(CLI::ExistingFile);
  estimate->add_option("--mode", mode, "grid or continuous")->check(CLI::IsMember({"grid", "continuous"}));
  estimate->add_option("--table", table_path, "Write the cost table as CSV");
  estimate->add_option("--seed", est_seed, "Seed for the partition estimates");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*recover) {
      const auto cfg = study_config(recover, dim, trials, seed, smoke, threads);
      const auto report = strategist::recovery_study(cfg, std::filesystem::path(out));
      std::cout << "recovery study written to " << out << " (" << report.failed_trials << " failed trials)\n";
    } else if (*transfer) {
      auto cfg = study_config(transfer, dim, trials, seed, smoke, threads);
      if (transfer->count("--iterations")) cfg.transfer_iterations = iterations;
      const auto report = strategist::transfer_study(cfg, std::filesystem::path(out));
      std::cout << "transfer study written to " << out << " (" << report.failed_trials << " failed trials)\n";
    } else if (*serve) {
      std::optional<std::filesystem::path> data_dir;
      if (const char* env = std::getenv("STRATEGIST_DATA_DIR")) data_dir = env;
      else data_dir = "strategist-data";
      strategist::SessionService service(data_dir);
      auto server = strategist::make_server(service);
      g_server = server.get();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << port << " (data: " << data_dir->string() << ")\n" << std::flush;
      if (!server->listen(host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << "\n";
        return 1;
      }
    } else if (*estimate) {
      const auto t = strategist::load_trajectory(input);
      strategist::IboConfig cfg;
      cfg.seed = est_seed;
      const auto res = mode == "grid" ? strategist::estimate_grid(t, cfg) : strategist::estimate_continuous(t, cfg);
      const auto& e = res.estimate;
      std::cout << "lambda_hat " << strategist::format_lambda(e.lambda_hat) << "\nalpha_bo_hat " << e.alpha_bo_hat
                << "\nalpha_ini_hat " << e.alpha_ini_hat << "\nk0_hat " << e.k0_hat << "\ncost " << e.cost << '\n';
      if (!table_path.empty()) {
        std::ofstream os(table_path);
        strategist::write_cost_table_csv(os, res.table);
      }
    }
  } catch (const strategist::Error& e) {
    std::cerr << "error [" << strategist::to_string(e.code()) << "]: " << e.what();
    if (!e.detail().empty()) std::cerr << " (" << e.detail() << ")";
    std::cerr << '\n';
    return 2;
  }
  return 0;
}
