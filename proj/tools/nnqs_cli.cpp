#include <CLI11.hpp>

#include <iostream>

#include "nnqs/commands.hpp"
#include "nnqs/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Neural-network quantum state ground-state solver"};
  app.require_subcommand(1);

  nnqs::RunOptions run;
  std::uint64_t max_iters = 0;
  std::string out_dir;
  auto* run_cmd = app.add_subcommand("run", "Train the ansatz on the Hamiltonian named in a config file");
  run_cmd->add_option("config", run.config_path, "Run config")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--resume", run.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  run_cmd->add_option("--max-iters", max_iters, "Override train.max_iters");
  run_cmd->add_option("--output", out_dir, "Override output.dir");
  run_cmd->add_flag("--quiet", run.quiet, "Only write files");

  std::string exact_path;
  bool full_space = false;
  std::size_t max_dim = std::size_t{1} << 20;
  auto* exact_cmd = app.add_subcommand("exact", "Exact ground-state energy by Krylov iteration");
  exact_cmd->add_option("hamiltonian", exact_path, "Hamiltonian file")->required()->check(CLI::ExistingFile);
  exact_cmd->add_flag("--full-space", full_space, "Ignore the electron sector");
  exact_cmd->add_option("--max-dim", max_dim, "Largest basis allowed");

  std::string inspect_path;
  auto* ham_cmd = app.add_subcommand("ham", "Hamiltonian utilities");
  ham_cmd->require_subcommand(1);
  auto* inspect_cmd = ham_cmd->add_subcommand("inspect", "Term counts and layout sizes");
  inspect_cmd->add_option("hamiltonian", inspect_path, "Hamiltonian file")->required()->check(CLI::ExistingFile);

  nnqs::PesOptions pes;
  auto* pes_cmd = app.add_subcommand("pes", "One training run and oracle check per Hamiltonian file");
  pes_cmd->add_option("config", pes.config_path, "Run config (hamiltonian.path is ignored)")
      ->required()
      ->check(CLI::ExistingFile);
  pes_cmd->add_option("hamiltonians", pes.hamiltonians, "Hamiltonian files")->check(CLI::ExistingFile);
  pes_cmd->add_option("--csv", pes.csv_path, "Write the CSV here instead of stdout");
  pes_cmd->add_option("--oracle-max-dim", pes.oracle_max_dim, "Skip the oracle above this sector size");

  nnqs::SampleDebugOptions dbg;
  auto* dbg_cmd = app.add_subcommand("sample-debug", "Dump a partitioned sample set as CSV");
  dbg_cmd->add_option("config", dbg.config_path, "Run config")->required()->check(CLI::ExistingFile);
  dbg_cmd->add_option("--checkpoint", dbg.checkpoint, "Parameters to sample from")->check(CLI::ExistingFile);
  dbg_cmd->add_option("--workers", dbg.workers, "Number of workers")->check(CLI::PositiveNumber);
  dbg_cmd->add_option("--samples", dbg.samples, "N_s")->check(CLI::PositiveNumber);
  dbg_cmd->add_option("--n-u-star", dbg.n_u_star, "Split threshold (default 1024 * workers)");
  dbg_cmd->add_option("--csv", dbg.csv_path, "Write the CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      if (max_iters) run.max_iters = max_iters;
      if (!out_dir.empty()) run.output_dir = out_dir;
      return nnqs::cmd_run(run, std::cout);
    }
    if (*exact_cmd) return nnqs::cmd_exact(exact_path, full_space, max_dim, std::cout);
    if (*inspect_cmd) return nnqs::cmd_ham_inspect(inspect_path, std::cout);
    if (*pes_cmd) return nnqs::cmd_pes(pes, std::cout);
    if (*dbg_cmd) return nnqs::cmd_sample_debug(dbg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
