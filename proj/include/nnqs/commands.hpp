#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nnqs/config.hpp"
#include "nnqs/vmc.hpp"

namespace nnqs {

/// Files written by `run` inside the output directory.
inline constexpr const char* kLogFile = "log.csv";
inline constexpr const char* kSummaryFile = "summary.txt";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

struct RunOptions {
  std::string config_path;
  std::string resume;  ///< checkpoint to continue from, empty for a fresh run
  std::optional<std::uint64_t> max_iters;
  std::optional<std::string> output_dir;
  bool quiet = false;
};

struct RunOutcome {
  TrainResult result;
  std::string params_hash;
  std::uint64_t iteration = 0;
  EnergyMode mode = EnergyMode::SampleAware;
};

/// Trains from a loaded config; writes log, summary and checkpoint files.
RunOutcome run_training(const RunConfig& cfg, const std::string& resume, std::ostream& out, bool quiet);

/// Each command returns a process exit status and reports on `out`.
int cmd_run(const RunOptions& opt, std::ostream& out);
int cmd_exact(const std::string& ham_path, bool full_space, std::size_t max_dim, std::ostream& out);
int cmd_ham_inspect(const std::string& ham_path, std::ostream& out);

struct PesOptions {
  std::string config_path;
  std::vector<std::string> hamiltonians;
  std::string csv_path;  ///< empty writes the CSV to `out`
  std::size_t oracle_max_dim = std::size_t{1} << 20;
};

/// CSV columns: label,E_vmc,E_oracle,abs_error,status. E_oracle and abs_error
/// are empty when the sector exceeds the oracle cap; a failed point keeps its
/// row with the error text in `status`.
int cmd_pes(const PesOptions& opt, std::ostream& out);

struct SampleDebugOptions {
  std::string config_path;
  std::string checkpoint;  ///< empty uses freshly initialized parameters
  int workers = 1;
  std::uint64_t samples = 100000;
  std::size_t n_u_star = 0;
  std::string csv_path;
};

int cmd_sample_debug(const SampleDebugOptions& opt, std::ostream& out);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_field(const std::string& s);

}  // namespace nnqs
