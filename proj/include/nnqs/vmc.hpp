#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnqs/ansatz.hpp"
#include "nnqs/local_energy.hpp"
#include "nnqs/pauli_hamiltonian.hpp"
#include "nnqs/sampler.hpp"

namespace nnqs {

struct EnergyEstimate {
  std::complex<double> mean;
  double variance = 0.0;
  std::size_t n_unique = 0;
  std::uint64_t n_samples = 0;
};

/// Weighted mean and variance of E_loc over unique samples.
EnergyEstimate estimate_energy(const SampleSet& s, std::span<const std::complex<double>> e_loc);

/// Surrogate weights a_u = 2 (w_u/N_s) Re(E_u - mean), b_u = 2 (w_u/N_s) Im(E_u - mean),
/// with N_s taken as `norm`.
void gradient_weights(std::span<const std::uint64_t> weights, std::span<const std::complex<double>> e_loc,
                      std::complex<double> mean, double norm, std::vector<double>& a, std::vector<double>& b);

/// Energy gradient 2 Re E[(E_loc - mean) d ln Psi*] through the ansatz backward pass.
Eigen::VectorXd estimate_gradient(const Ansatz& psi, const SampleSet& s, std::span<const std::complex<double>> e_loc,
                                  const EnergyEstimate& est);

/// Energy, variance and gradient with exact probabilities |Psi(x)|^2 over every
/// sector state instead of samples. Local energies include every coupled state.
struct EnumeratedEstimate {
  std::complex<double> mean;
  double variance = 0.0;
  Eigen::VectorXd gradient;
};
EnumeratedEstimate enumerated_estimate(const CompressedHamiltonian& c, const Ansatz& psi);

/// alpha_i = d_model^-0.5 * min(i^-0.5, i * s_warmup^-1.5).
double learning_rate(std::uint64_t i, int d_model, int s_warmup);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool operator==(const AdamWConfig&) const = default;
};

struct AdamWState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;
};

/// One AdamW update with bias-corrected moments and decoupled decay
/// (p -= alpha * weight_decay * p). Throws NumericalError on a non-finite result.
void optimizer_step(Eigen::VectorXd& p, const Eigen::VectorXd& g, AdamWState& state, double alpha,
                    const AdamWConfig& cfg = {});

/// Bytes moved by the collectives of one iteration.
struct CollectiveStats {
  std::uint64_t allgather = 0;         ///< unique samples and amplitudes
  std::uint64_t energy_allreduce = 0;  ///< complex energy partial sums
  std::uint64_t param_allreduce = 0;   ///< gradient average
  std::uint64_t diagnostic = 0;        ///< variance partial sums, not part of the model
  std::uint64_t total() const noexcept { return allgather + energy_allreduce + param_allreduce; }
  bool operator==(const CollectiveStats&) const = default;
};

/// Predicted traffic: N_u*N_p*(ceil(N/8)+16), 16*N_p and 8*M*N_p bytes.
CollectiveStats predicted_volume(int n_qubits, std::uint64_t n_unique, int n_workers, std::uint64_t n_params);

/// Worker-pool collectives with byte counting. Reductions visit workers in
/// rank order so results do not depend on scheduling.
class InProcessWorld {
 public:
  explicit InProcessWorld(int n_workers);

  int size() const noexcept { return n_workers_; }
  const CollectiveStats& stats() const noexcept { return stats_; }
  void reset_stats() noexcept { stats_ = {}; }

  /// Every rank receives the concatenation of all contributions, in rank order.
  template <typename T>
  std::vector<T> allgather(const std::vector<std::vector<T>>& contributions, std::uint64_t record_bytes) {
    std::vector<T> out;
    for (const auto& c : contributions) out.insert(out.end(), c.begin(), c.end());
    stats_.allgather += static_cast<std::uint64_t>(out.size()) * record_bytes * static_cast<std::uint64_t>(n_workers_);
    return out;
  }

  std::complex<double> allreduce_energy(std::span<const std::complex<double>> per_rank);
  double allreduce_diagnostic(std::span<const double> per_rank);
  /// Sum_r weights[r] * vectors[r], delivered to every rank.
  Eigen::VectorXd allreduce_weighted(std::span<const Eigen::VectorXd> vectors, std::span<const double> weights);

 private:
  int n_workers_;
  CollectiveStats stats_;
};

enum class EnergyMode { SampleAware, Exact };
std::string to_string(EnergyMode m);
EnergyMode parse_energy_mode(const std::string& s);

struct TrainConfig {
  std::uint64_t max_iters = 100000;
  int warmup = 4000;
  std::uint64_t samples_initial = 100000;
  std::uint64_t samples_initial_iters = 100;
  std::uint64_t samples_ramp_factor = 10;
  std::uint64_t samples_ramp_interval = 1000;
  std::uint64_t samples_max = 1'000'000'000'000ull;
  AdamWConfig adam;
  int n_workers = 1;
  std::size_t n_u_star = 0;  ///< 0 selects 1024 * n_workers
  std::uint64_t seed = 0;
  EnergyMode energy_mode = EnergyMode::SampleAware;
  std::uint64_t plateau_window = 2000;
  double plateau_rtol = 1e-7;
  double imag_abort_ratio = 1e-3;
  std::uint64_t imag_abort_window = 100;

  /// Throws nnqs::Error naming the first invalid field.
  void validate() const;
  std::size_t effective_n_u_star() const noexcept {
    return n_u_star ? n_u_star : static_cast<std::size_t>(1024) * static_cast<std::size_t>(n_workers);
  }
};

/// N_s at iteration i (1-based): samples_initial for the first
/// samples_initial_iters iterations, then multiplied by samples_ramp_factor at
/// the start of every samples_ramp_interval block, capped at samples_max.
std::uint64_t sample_budget(std::uint64_t i, const TrainConfig& cfg);

/// Seed of the sampling stream of iteration i.
std::uint64_t iteration_seed(std::uint64_t seed, std::uint64_t i) noexcept;

/// Replicated training state: one parameter copy and optimizer state per rank.
struct TrainState {
  TrainConfig config;
  std::vector<Ansatz> replicas;
  std::vector<AdamWState> optimizers;
  std::uint64_t iteration = 0;

  TrainState(const AnsatzConfig& ansatz, const TrainConfig& train);
  /// Restores every rank from a checkpoint (parameters, moments, counter).
  void restore(const Checkpoint& ck);
  Checkpoint checkpoint() const;
};

inline constexpr std::size_t kStageCount = 6;

struct IterationRecord {
  std::uint64_t iteration = 0;
  EnergyEstimate energy;
  std::uint64_t n_samples = 0;
  double learning_rate = 0.0;
  std::array<double, kStageCount> stage_seconds{};
  CollectiveStats bytes;
  LocalEnergyCounters lookups;
  int split_layer = 0;
  std::string params_hash;
  Eigen::VectorXd gradient;
};

/// One bulk-synchronous iteration: partitioned sampling, allgather of unique
/// samples with amplitudes, local energies per rank, energy allreduce,
/// backward per rank, gradient average and a replicated optimizer step.
/// Throws nnqs::Error if the replicas' parameter hashes disagree afterwards.
IterationRecord train_iteration(TrainState& st, const CompressedHamiltonian& c, InProcessWorld& world);

enum class StopReason { MaxIters, Plateau, ImaginaryEnergy };
std::string to_string(StopReason r);

struct TrainResult {
  StopReason reason = StopReason::MaxIters;
  std::uint64_t iterations = 0;
  double final_energy = 0.0;
  EnergyEstimate last;
};

/// Runs train_iteration until max_iters, a plateau (relative energy change
/// below plateau_rtol across plateau_window iterations) or
/// imag_abort_window consecutive iterations with |Im E| > ratio * |Re E|.
/// `on_iteration` sees every record after the step.
TrainResult train(TrainState& st, const CompressedHamiltonian& c,
                  const std::function<void(const IterationRecord&)>& on_iteration = {});

/// Per-iteration CSV (RFC 4180).
void write_log_header(std::ostream& os);
void write_log_row(std::ostream& os, const IterationRecord& r);

}  // namespace nnqs
