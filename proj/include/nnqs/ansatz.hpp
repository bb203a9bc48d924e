#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnqs/basis_state.hpp"

namespace nnqs {

/// Architecture hyperparameters. The amplitude is a causal decoder stack over
/// two-qubit tokens; the phase is a tanh MLP over the full bitstring.
struct AnsatzConfig {
  int n_qubits = 4;
  int n_up = 1;
  int n_down = 1;
  int d_model = 16;
  int n_heads = 4;
  int n_decoders = 2;
  std::vector<int> mlp_widths{512, 512};
  std::uint64_t seed = 0;

  int n_orbitals() const noexcept { return n_qubits / 2; }
  /// Throws nnqs::Error describing the first violated constraint.
  void validate() const;
  bool operator==(const AnsatzConfig&) const = default;
};

/// Token alphabet of one spatial orbital: bit 0 is the spin-up qubit (2o),
/// bit 1 the spin-down qubit (2o+1). So 0="00", 1=up only, 2=down only, 3=both.
inline constexpr int kTokenCount = 4;
inline constexpr int kBeginToken = 4;

using ConditionalDist = std::array<double, kTokenCount>;

struct AmplitudePhase {
  double log_amp = 0.0;  ///< ln|Psi(x)|
  double phase = 0.0;    ///< arg Psi(x), radians
};

/// Named slice of the flat parameter vector.
struct ParameterBlock {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
  enum class Kind { Weight, Bias, Gain } kind = Kind::Weight;
  Eigen::Index size() const noexcept { return rows * cols; }
};

class ParameterLayout {
 public:
  explicit ParameterLayout(const AnsatzConfig& cfg);

  Eigen::Index size() const noexcept { return size_; }
  const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }
  const ParameterBlock& block(std::size_t i) const { return blocks_[i]; }
  /// Block containing flat index `i`.
  const ParameterBlock& block_at(Eigen::Index i) const;
  const ParameterBlock& find(const std::string& name) const;

 private:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, ParameterBlock::Kind kind);
  friend class Ansatz;

  std::vector<ParameterBlock> blocks_;
  Eigen::Index size_ = 0;
};

/// Token sequence (step order) of a basis state: step t reads spatial orbital
/// n_orbitals - 1 - t.
std::vector<int> state_tokens(const BasisState& x, int n_orbitals);
BasisState tokens_state(std::span<const int> tokens, int n_orbitals);

/// True iff x has exactly n_up spin-up and n_down spin-down electrons (and no
/// bits above n_qubits).
bool in_sector(const BasisState& x, int n_qubits, int n_up, int n_down) noexcept;

/// Token feasibility at step t given the prefix occupation counts: the
/// cumulative counts must not exceed the targets and the remaining steps must
/// still be able to reach them.
std::array<bool, kTokenCount> feasible_tokens(int step, int up_so_far, int down_so_far, int n_orbitals,
                                              int n_up, int n_down) noexcept;

/// Anything that yields ln|Psi| and arg Psi for a batch of sector states.
class Wavefunction {
 public:
  virtual ~Wavefunction() = default;
  virtual int n_qubits() const noexcept = 0;
  virtual int n_up() const noexcept = 0;
  virtual int n_down() const noexcept = 0;
  virtual std::vector<AmplitudePhase> log_amp_phase(std::span<const BasisState> states) const = 0;
};

/// The neural wavefunction Psi(x) = |Psi(x)| exp(i phi(x)) with parameters
/// held by value. Evaluation methods are const and reentrant.
class Ansatz final : public Wavefunction {
 public:
  using Vector = Eigen::VectorXd;

  /// Builds the layout and draws deterministic initial parameters from cfg.seed.
  explicit Ansatz(AnsatzConfig cfg);
  Ansatz(AnsatzConfig cfg, Vector params);

  const AnsatzConfig& config() const noexcept { return cfg_; }
  const ParameterLayout& layout() const noexcept { return layout_; }
  const Vector& params() const noexcept { return params_; }
  Vector& mutable_params() noexcept { return params_; }
  void set_params(Vector p);
  Eigen::Index n_params() const noexcept { return layout_.size(); }

  int n_qubits() const noexcept override { return cfg_.n_qubits; }
  int n_up() const noexcept override { return cfg_.n_up; }
  int n_down() const noexcept override { return cfg_.n_down; }

  /// Masked conditional distribution of the next token after `prefix`
  /// (length t < n_orbitals). Throws if every token is infeasible.
  ConditionalDist masked_conditionals(std::span<const int> prefix) const;

  /// Masked conditionals for many prefixes of equal length, in one batch.
  std::vector<ConditionalDist> masked_conditionals_batch(std::span<const std::vector<int>> prefixes) const;

  /// Conditionals at every step of x's own token path, from one causal pass
  /// over the whole sequence.
  std::vector<ConditionalDist> path_conditionals(const BasisState& x) const;

  /// Log-amplitude and phase. Throws nnqs::Error for states outside the sector.
  std::vector<AmplitudePhase> log_amp_phase(std::span<const BasisState> states) const override;

  /// Gradient of S = sum_u a_u ln|Psi(x_u)| + b_u phi(x_u).
  Vector backward(std::span<const BasisState> states, std::span<const double> a_weights,
                  std::span<const double> b_weights) const;

 private:
  AnsatzConfig cfg_;
  ParameterLayout layout_;
  Vector params_;
};

/// Parameter vector from the layout and seed: weights uniform in
/// +-sqrt(6/(fan_in+fan_out)), biases zero, normalization gains one.
Eigen::VectorXd init_params(const AnsatzConfig& cfg);

/// Flat free-function forms.
inline ConditionalDist masked_conditionals(const Ansatz& psi, std::span<const int> prefix) {
  return psi.masked_conditionals(prefix);
}
inline std::vector<AmplitudePhase> log_amp_phase(const Wavefunction& psi, std::span<const BasisState> states) {
  return psi.log_amp_phase(states);
}

/// Checkpoint blob: config echo, training counter, parameters and optional
/// optimizer moments. Layout documented in docs/checkpoint_format.md.
struct Checkpoint {
  AnsatzConfig config;
  std::uint64_t iteration = 0;
  Eigen::VectorXd params;
  Eigen::VectorXd adam_m;  ///< empty when not stored
  Eigen::VectorXd adam_v;
  std::uint64_t adam_step = 0;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

/// SHA-256 of the parameter bytes (little-endian doubles), hex encoded.
std::string params_hash(const Eigen::VectorXd& params);

}  // namespace nnqs
