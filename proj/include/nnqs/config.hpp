#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "nnqs/ansatz.hpp"
#include "nnqs/vmc.hpp"

namespace nnqs {

/// Everything `nnqs run` needs. Qubit and electron counts of `ansatz` come
/// from the Hamiltonian header, not from the config text.
struct RunConfig {
  std::string hamiltonian;  ///< resolved path
  AnsatzConfig ansatz;
  TrainConfig train;
  std::string output_dir = "nnqs-out";
  std::uint64_t checkpoint_interval = 1000;
  int threads = 0;
};

/// Parses the flat `key = value` format with `[section]` headers. Keys are
/// addressed as `section.key`; unknown keys, repeated keys and bad values are
/// rejected with a ParseError carrying the line number. Relative paths are
/// resolved against `base_dir`. A given Hamiltonian file must exist.
RunConfig parse_run_config(std::string_view text, const std::string& base_dir = "", bool require_hamiltonian = true);
RunConfig load_run_config(const std::string& path, bool require_hamiltonian = true);

/// One line per accepted key with its default, for `--help` style listings.
std::string config_reference();

}  // namespace nnqs
