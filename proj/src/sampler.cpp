#include "nnqs/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "nnqs/error.hpp"
#include "nnqs/parallel.hpp"

namespace nnqs {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

SampleSet leaves_to_set(int n_qubits, std::vector<TreeNode>& leaves) {
  std::sort(leaves.begin(), leaves.end(), [](const TreeNode& a, const TreeNode& b) { return a.prefix < b.prefix; });
  SampleSet s;
  s.n_qubits = n_qubits;
  s.states.reserve(leaves.size());
  s.weights.reserve(leaves.size());
  for (const auto& n : leaves) {
    s.states.push_back(n.prefix);
    s.weights.push_back(n.weight);
    s.total += n.weight;
  }
  return s;
}

/// One sampling step: every node at depth t is split among its children.
std::vector<TreeNode> expand_layer(const Ansatz& psi, const std::vector<TreeNode>& nodes, std::uint64_t seed) {
  const int n_orb = psi.config().n_orbitals();
  std::vector<std::vector<int>> prefixes;
  prefixes.reserve(nodes.size());
  for (const auto& n : nodes) {
    auto toks = state_tokens(n.prefix, n_orb);
    toks.resize(static_cast<std::size_t>(n.depth));
    prefixes.push_back(std::move(toks));
  }
  const auto conds = psi.masked_conditionals_batch(prefixes);

  std::vector<std::array<std::uint64_t, kTokenCount>> split(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t i) {
    std::mt19937_64 rng(node_seed(seed, nodes[i].depth, nodes[i].prefix));
    split[i] = sample_multinomial(nodes[i].weight, conds[i], rng);
  });

  std::vector<TreeNode> next;
  next.reserve(nodes.size() * 2);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int o = n_orb - 1 - nodes[i].depth;
    for (int tok = 0; tok < kTokenCount; ++tok) {
      const std::uint64_t w = split[i][static_cast<std::size_t>(tok)];
      if (w == 0) continue;
      TreeNode child{nodes[i].prefix, nodes[i].depth + 1, w};
      if (tok & 1) child.prefix.set(2 * o);
      if (tok & 2) child.prefix.set(2 * o + 1);
      next.push_back(child);
    }
  }
  return next;
}

}  // namespace

std::uint64_t node_seed(std::uint64_t seed, int depth, const BasisState& prefix) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(depth));
  h = splitmix64(h ^ prefix.words[0]);
  h = splitmix64(h ^ prefix.words[1]);
  return h;
}

std::uint64_t sample_binomial(std::uint64_t n, double p, std::mt19937_64& rng) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  // libstdc++ switches to a rejection sampler for large n*p; it works in
  // doubles internally but returns the integer type requested.
  std::binomial_distribution<std::uint64_t> dist(n, p);
  return std::min(dist(rng), n);
}

std::array<std::uint64_t, kTokenCount> sample_multinomial(std::uint64_t n, const ConditionalDist& probs,
                                                          std::mt19937_64& rng) {
  std::array<std::uint64_t, kTokenCount> out{};
  int last = -1;
  for (int k = 0; k < kTokenCount; ++k) {
    if (probs[static_cast<std::size_t>(k)] > 0.0) last = k;
  }
  if (last < 0) return out;
  std::uint64_t remaining = n;
  double rest = 1.0;
  for (int k = 0; k < last && remaining > 0; ++k) {
    const double p = probs[static_cast<std::size_t>(k)];
    if (p <= 0.0) continue;
    const double q = rest > 0.0 ? std::clamp(p / rest, 0.0, 1.0) : 1.0;
    const std::uint64_t draw = sample_binomial(remaining, q, rng);
    out[static_cast<std::size_t>(k)] = draw;
    remaining -= draw;
    rest -= p;
  }
  out[static_cast<std::size_t>(last)] += remaining;
  return out;
}

SampleSet expand_to_leaves(const Ansatz& psi, std::vector<TreeNode> nodes, std::uint64_t seed,
                           SamplingStats* stats) {
  const int n_orb = psi.config().n_orbitals();
  if (stats) {
    stats->evaluations_per_layer.assign(static_cast<std::size_t>(n_orb), 0);
    stats->nodes_per_layer.assign(static_cast<std::size_t>(n_orb), 0);
  }
  while (!nodes.empty() && nodes.front().depth < n_orb) {
    const auto t = static_cast<std::size_t>(nodes.front().depth);
    if (stats) stats->evaluations_per_layer[t] += nodes.size();
    nodes = expand_layer(psi, nodes, seed);
    if (stats) stats->nodes_per_layer[t] = nodes.size();
  }
  return leaves_to_set(psi.n_qubits(), nodes);
}

SampleSet batch_sample(const Ansatz& psi, std::uint64_t n_s, std::uint64_t seed, SamplingStats* stats) {
  if (n_s == 0) throw Error("batch_sample: n_s must be at least 1");
  return expand_to_leaves(psi, {TreeNode{BasisState{}, 0, n_s}}, seed, stats);
}

std::vector<std::vector<TreeNode>> pack_nodes(std::span<const TreeNode> nodes, int n_workers) {
  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (nodes[a].weight != nodes[b].weight) return nodes[a].weight > nodes[b].weight;
    return nodes[a].prefix < nodes[b].prefix;
  });
  std::vector<std::vector<TreeNode>> out(static_cast<std::size_t>(n_workers));
  std::vector<std::uint64_t> load(static_cast<std::size_t>(n_workers), 0);
  std::vector<std::size_t> count(static_cast<std::size_t>(n_workers), 0);
  for (std::size_t idx : order) {
    std::size_t best = 0;
    for (std::size_t w = 1; w < load.size(); ++w) {
      if (load[w] < load[best] || (load[w] == load[best] && count[w] < count[best])) best = w;
    }
    out[best].push_back(nodes[idx]);
    load[best] += nodes[idx].weight;
    ++count[best];
  }
  return out;
}

PartitionedSamples partitioned_sample(const Ansatz& psi, std::uint64_t n_s, int n_workers, std::size_t n_u_star,
                                      std::uint64_t seed) {
  if (n_workers < 1) throw Error("partitioned_sample: need at least one worker");
  if (n_u_star < static_cast<std::size_t>(n_workers)) {
    throw Error("partitioned_sample: threshold n_u_star (" + std::to_string(n_u_star) +
                ") is below the worker count (" + std::to_string(n_workers) + ")");
  }
  if (n_s == 0) throw Error("partitioned_sample: n_s must be at least 1");
  const int n_orb = psi.config().n_orbitals();

  // Every worker replays these steps with the same seed; computed once here.
  std::vector<TreeNode> nodes{TreeNode{BasisState{}, 0, n_s}};
  int depth = 0;
  while (depth < n_orb && nodes.size() <= n_u_star) {
    nodes = expand_layer(psi, nodes, seed);
    ++depth;
  }

  PartitionedSamples out;
  out.plan.split_layer = depth;
  out.plan.assignments = pack_nodes(nodes, n_workers);
  out.per_worker.resize(static_cast<std::size_t>(n_workers));
  out.stats.resize(static_cast<std::size_t>(n_workers));
  parallel_for(static_cast<std::size_t>(n_workers), [&](std::size_t w) {
    out.per_worker[w] = expand_to_leaves(psi, out.plan.assignments[w], seed, &out.stats[w]);
    out.per_worker[w].n_qubits = psi.n_qubits();
  });
  return out;
}

void check_sample_set(const SampleSet& s, int n_up, int n_down) {
  if (s.states.size() != s.weights.size()) throw Error("sample set: id and weight lists differ in length");
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.weights[i] == 0) throw Error("sample set: zero weight entry");
    if (i > 0 && !(s.states[i - 1] < s.states[i])) throw Error("sample set: ids not strictly increasing");
    if (!in_sector(s.states[i], s.n_qubits, n_up, n_down)) throw Error("sample set: state outside the sector");
    sum += s.weights[i];
  }
  if (sum != s.total) throw Error("sample set: weights do not sum to the total");
}

SampleSet merge_samples(std::span<const SampleSet> parts) {
  std::vector<TreeNode> all;
  int n_qubits = 0;
  for (const auto& p : parts) {
    n_qubits = std::max(n_qubits, p.n_qubits);
    for (std::size_t i = 0; i < p.size(); ++i) all.push_back({p.states[i], 0, p.weights[i]});
  }
  std::sort(all.begin(), all.end(), [](const TreeNode& a, const TreeNode& b) { return a.prefix < b.prefix; });
  std::vector<TreeNode> merged;
  for (const auto& n : all) {
    if (!merged.empty() && merged.back().prefix == n.prefix) {
      merged.back().weight += n.weight;
    } else {
      merged.push_back(n);
    }
  }
  return leaves_to_set(n_qubits, merged);
}

double weight_imbalance(std::span<const SampleSet> per_worker) {
  if (per_worker.empty()) return 1.0;
  std::uint64_t max_w = 0;
  long double sum = 0;
  for (const auto& s : per_worker) {
    max_w = std::max(max_w, s.total);
    sum += s.total;
  }
  const long double mean = sum / static_cast<long double>(per_worker.size());
  return mean > 0 ? static_cast<double>(max_w / mean) : 1.0;
}

void write_samples_csv(std::ostream& os, std::span<const SampleSet> per_worker) {
  os << "worker,encoded_id,weight\r\n";
  for (std::size_t w = 0; w < per_worker.size(); ++w) {
    const auto& s = per_worker[w];
    for (std::size_t i = 0; i < s.size(); ++i) {
      os << w << ',' << to_hex(s.states[i]) << ',' << s.weights[i] << "\r\n";
    }
  }
}

}  // namespace nnqs
