#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "nnqs/ansatz.hpp"
#include "nnqs/basis_state.hpp"

namespace nnqs {

/// Unique samples with occurrence counts, sorted by encoded id. `states` is
/// the id list: strictly increasing, one entry per unique sample.
struct SampleSet {
  int n_qubits = 0;
  std::vector<BasisState> states;
  std::vector<std::uint64_t> weights;
  std::uint64_t total = 0;

  std::size_t size() const noexcept { return states.size(); }
  std::span<const BasisState> encoded_ids() const noexcept { return states; }

  bool operator==(const SampleSet&) const = default;
};

/// Throws nnqs::Error if ordering, weight sum or sector membership is broken.
void check_sample_set(const SampleSet& s, int n_up, int n_down);

/// Union of disjoint sample sets (weights of repeated ids are summed).
SampleSet merge_samples(std::span<const SampleSet> parts);

/// Per-layer counters of one sampling run. Layer t holds the nodes whose
/// conditionals were evaluated to produce the tokens of step t.
struct SamplingStats {
  std::vector<std::size_t> evaluations_per_layer;
  std::vector<std::size_t> nodes_per_layer;  ///< surviving nodes after step t
};

/// A partially sampled prefix: the first `depth` tokens and its weight.
struct TreeNode {
  BasisState prefix;
  int depth = 0;
  std::uint64_t weight = 0;
};

/// Draws Binomial(n, p) for counts up to 2^63 with 64-bit integers throughout.
std::uint64_t sample_binomial(std::uint64_t n, double p, std::mt19937_64& rng);

/// Splits `n` over the distribution `probs` as a chain of conditional
/// binomials. Zero-probability entries always receive zero.
std::array<std::uint64_t, kTokenCount> sample_multinomial(std::uint64_t n, const ConditionalDist& probs,
                                                          std::mt19937_64& rng);

/// Seed of the random stream that splits node (depth, prefix) for run `seed`.
std::uint64_t node_seed(std::uint64_t seed, int depth, const BasisState& prefix) noexcept;

/// Batch autoregressive sampling of n_s samples over the quadtree of tokens.
/// Children with zero weight are pruned at every layer.
SampleSet batch_sample(const Ansatz& psi, std::uint64_t n_s, std::uint64_t seed, SamplingStats* stats = nullptr);

/// Expands `nodes` (all at the same depth) down to full states.
SampleSet expand_to_leaves(const Ansatz& psi, std::vector<TreeNode> nodes, std::uint64_t seed,
                           SamplingStats* stats = nullptr);

struct PartitionPlan {
  int split_layer = 0;  ///< number of steps replayed before the split
  std::vector<std::vector<TreeNode>> assignments;
};

struct PartitionedSamples {
  PartitionPlan plan;
  std::vector<SampleSet> per_worker;
  std::vector<SamplingStats> stats;  ///< per worker, covering layers after the split
};

/// Assigns nodes to workers by greedy longest-processing-time packing on
/// node weight (heaviest first, to the currently lightest worker).
std::vector<std::vector<TreeNode>> pack_nodes(std::span<const TreeNode> nodes, int n_workers);

/// Replays the first k steps (k = first layer with more than n_u_star unique
/// nodes, or the leaf layer) and splits the layer-k nodes across workers.
/// The union of the returned sets equals batch_sample(psi, n_s, seed).
PartitionedSamples partitioned_sample(const Ansatz& psi, std::uint64_t n_s, int n_workers,
                                      std::size_t n_u_star, std::uint64_t seed);

/// Max over mean of per-worker total weights (1 is perfect balance).
double weight_imbalance(std::span<const SampleSet> per_worker);

/// CSV with header `worker,encoded_id,weight`; ids are 32-digit hex.
void write_samples_csv(std::ostream& os, std::span<const SampleSet> per_worker);

}  // namespace nnqs
