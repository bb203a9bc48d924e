#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "nnqs/error.hpp"
#include "nnqs/pauli_hamiltonian.hpp"
#include "nnqs/sampler.hpp"
#include "test_util.hpp"

using namespace nnqs;

namespace {

Ansatz lih_ansatz(std::uint64_t seed) {
  const auto h = read_hamiltonian_file(testutil::data_path("lih_sto3g.ham"));
  return testutil::scrambled(testutil::small_config(h.n_qubits, h.n_up, h.n_down, seed), seed + 1, 2.0);
}

std::map<BasisState, std::uint64_t> as_map(const SampleSet& s) {
  std::map<BasisState, std::uint64_t> m;
  for (std::size_t i = 0; i < s.size(); ++i) m[s.states[i]] += s.weights[i];
  return m;
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("weights sum to n_s exactly") {
    const auto psi = testutil::scrambled(testutil::small_config(8, 2, 2), 3, 2.0);
    for (std::uint64_t n_s : {std::uint64_t{1}, std::uint64_t{7}, std::uint64_t{100000}, std::uint64_t{1'000'000'000'000}}) {
      const auto s = batch_sample(psi, n_s, 11);
      CHECK(s.total == n_s);
      std::uint64_t sum = 0;
      for (auto w : s.weights) {
        CHECK(w >= 1);
        sum += w;
      }
      CHECK(sum == n_s);
      CHECK_NOTHROW(check_sample_set(s, 2, 2));
    }
  }

  TEST_CASE("ids are strictly increasing and every sample has nonzero probability") {
    const auto psi = lih_ansatz(4);
    const auto s = batch_sample(psi, 1'000'000, 5);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.states[i - 1] < s.states[i]);
    const auto ap = psi.log_amp_phase(s.states);
    for (const auto& a : ap) CHECK(std::isfinite(a.log_amp));
    CHECK(s.encoded_ids().size() == s.size());
  }

  TEST_CASE("empirical frequencies match enumerated probabilities") {
    const auto psi = testutil::scrambled(testutil::small_config(4, 1, 1), 8, 2.0);
    const std::uint64_t n_s = 1'000'000;
    const auto s = batch_sample(psi, n_s, 2024);
    const auto states = testutil::enumerate_sector(4, 1, 1);
    const auto ap = psi.log_amp_phase(states);
    const auto counts = as_map(s);
    double tv = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto it = counts.find(states[i]);
      const double freq = it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n_s);
      tv += std::abs(freq - std::exp(2.0 * ap[i].log_amp));
    }
    tv *= 0.5;
    MESSAGE("total variation distance " << tv);
    CHECK(tv <= 0.005);
  }

  TEST_CASE("same parameters, count and seed give the same sample set") {
    const auto psi = lih_ansatz(6);
    CHECK(batch_sample(psi, 123456, 9) == batch_sample(psi, 123456, 9));
    CHECK_FALSE(batch_sample(psi, 123456, 9) == batch_sample(psi, 123456, 10));
  }

  TEST_CASE("evaluations per layer equal the surviving nodes of the previous layer") {
    const auto psi = lih_ansatz(7);
    SamplingStats st;
    const auto s = batch_sample(psi, 50000, 3, &st);
    const int n_orb = psi.config().n_orbitals();
    REQUIRE(st.evaluations_per_layer.size() == static_cast<std::size_t>(n_orb));
    REQUIRE(st.nodes_per_layer.size() == static_cast<std::size_t>(n_orb));
    CHECK(st.evaluations_per_layer[0] == 1);
    for (int t = 1; t < n_orb; ++t) {
      CHECK(st.evaluations_per_layer[static_cast<std::size_t>(t)] == st.nodes_per_layer[static_cast<std::size_t>(t - 1)]);
    }
    CHECK(st.nodes_per_layer.back() == s.size());
  }

  TEST_CASE("one worker is identical to batch sampling") {
    const auto psi = lih_ansatz(12);
    for (std::size_t n_u_star : {std::size_t{1}, std::size_t{16}, std::size_t{1024}}) {
      const auto ps = partitioned_sample(psi, 200000, 1, n_u_star, 77);
      REQUIRE(ps.per_worker.size() == 1);
      CHECK(ps.per_worker[0] == batch_sample(psi, 200000, 77));
    }
  }

  TEST_CASE("union over workers equals the single-run sample set") {
    const auto psi = lih_ansatz(13);
    const auto whole = batch_sample(psi, 1'000'000, 21);
    for (int n_p : {2, 4, 8}) {
      for (std::size_t n_u_star : {static_cast<std::size_t>(n_p), std::size_t{16}, std::size_t{64},
                                   std::size_t{1024} * static_cast<std::size_t>(n_p)}) {
        if (n_u_star < static_cast<std::size_t>(n_p)) continue;
        CAPTURE(n_p);
        CAPTURE(n_u_star);
        const auto ps = partitioned_sample(psi, 1'000'000, n_p, n_u_star, 21);
        REQUIRE(ps.per_worker.size() == static_cast<std::size_t>(n_p));
        // Disjoint parts.
        std::map<BasisState, int> owner;
        for (int w = 0; w < n_p; ++w) {
          for (const auto& x : ps.per_worker[static_cast<std::size_t>(w)].states) CHECK(owner.emplace(x, w).second);
        }
        CHECK(merge_samples(ps.per_worker) == whole);
        // Non-empty assignments whenever the split layer has enough nodes.
        std::size_t n_nodes = 0;
        for (const auto& a : ps.plan.assignments) n_nodes += a.size();
        if (n_nodes >= static_cast<std::size_t>(n_p)) {
          for (const auto& a : ps.plan.assignments) CHECK_FALSE(a.empty());
        }
        if (ps.plan.split_layer < psi.config().n_orbitals()) CHECK(n_nodes > n_u_star);
      }
    }
  }

  TEST_CASE("load balance on LiH with four workers") {
    const auto psi = lih_ansatz(14);
    const auto ps = partitioned_sample(psi, 1'000'000, 4, 64, 5);
    const double imb = weight_imbalance(ps.per_worker);
    MESSAGE("split layer " << ps.plan.split_layer << ", max/mean worker weight " << imb);
    if (imb > 2.0) MESSAGE("imbalance above the 2x monitoring target");
    CHECK(imb >= 1.0);
  }

  TEST_CASE("threshold below the worker count is rejected") {
    const auto psi = lih_ansatz(15);
    CHECK_THROWS_AS(partitioned_sample(psi, 1000, 4, 3, 1), Error);
    CHECK_THROWS_AS(partitioned_sample(psi, 1000, 0, 3, 1), Error);
  }

  TEST_CASE("longest-processing-time packing") {
    std::vector<TreeNode> nodes;
    for (std::uint64_t w : {5, 4, 3, 3, 2, 1}) nodes.push_back({BasisState::from_uint(nodes.size()), 1, w});
    const auto packed = pack_nodes(nodes, 2);
    std::uint64_t l0 = 0, l1 = 0;
    for (const auto& n : packed[0]) l0 += n.weight;
    for (const auto& n : packed[1]) l1 += n.weight;
    CHECK(l0 == 9);
    CHECK(l1 == 9);
    CHECK(packed[0].size() + packed[1].size() == nodes.size());
    CHECK(packed[0].front().weight == 5);
  }

  TEST_CASE("binomial draws at 10^12 trials have the right moments") {
    std::mt19937_64 rng(42);
    const std::uint64_t n = 1'000'000'000'000ull;
    const double p = 0.3;
    const int k = 4000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < k; ++i) {
      const auto x = static_cast<double>(sample_binomial(n, p, rng));
      const double d = x - mean;
      mean += d / (i + 1);
      m2 += d * (x - mean);
    }
    const double var = m2 / (k - 1);
    const double exp_var = static_cast<double>(n) * p * (1 - p);
    CHECK(std::abs(mean - static_cast<double>(n) * p) <= 5.0 * std::sqrt(exp_var / k));
    CHECK(std::abs(var / exp_var - 1.0) <= 0.1);
    CHECK(sample_binomial(n, 0.0, rng) == 0);
    CHECK(sample_binomial(n, 1.0, rng) == n);
  }

  TEST_CASE("multinomial conserves the count and skips zero-probability entries") {
    std::mt19937_64 rng(1);
    for (std::uint64_t n : {std::uint64_t{0}, std::uint64_t{1}, std::uint64_t{1000}, std::uint64_t{1'000'000'000'000}}) {
      const auto c = sample_multinomial(n, ConditionalDist{0.5, 0.0, 0.25, 0.25}, rng);
      CHECK(c[0] + c[1] + c[2] + c[3] == n);
      CHECK(c[1] == 0);
    }
    const auto one = sample_multinomial(99, ConditionalDist{0.0, 0.0, 0.0, 1.0}, rng);
    CHECK(one[3] == 99);
  }

  TEST_CASE("node seeds depend on depth and prefix") {
    const auto a = node_seed(1, 2, BasisState::from_uint(3));
    CHECK(a == node_seed(1, 2, BasisState::from_uint(3)));
    CHECK(a != node_seed(2, 2, BasisState::from_uint(3)));
    CHECK(a != node_seed(1, 3, BasisState::from_uint(3)));
    CHECK(a != node_seed(1, 2, BasisState::from_uint(4)));
  }

  TEST_CASE("CSV dump reconstructs the gathered sample set") {
    const auto psi = lih_ansatz(16);
    const auto ps = partitioned_sample(psi, 300000, 4, 16, 8);
    std::ostringstream os;
    write_samples_csv(os, ps.per_worker);
    const std::string text = os.str();
    REQUIRE(text.rfind("worker,encoded_id,weight\r\n", 0) == 0);
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    std::map<BasisState, std::uint64_t> read;
    std::uint64_t total = 0;
    while (std::getline(is, line)) {
      REQUIRE(!line.empty());
      REQUIRE(line.back() == '\r');
      line.pop_back();
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      const std::string hex = line.substr(c1 + 1, c2 - c1 - 1);
      REQUIRE(hex.size() == 32);
      BasisState x;
      x.words[1] = std::stoull(hex.substr(0, 16), nullptr, 16);
      x.words[0] = std::stoull(hex.substr(16), nullptr, 16);
      const auto w = std::stoull(line.substr(c2 + 1));
      read[x] += w;
      total += w;
    }
    CHECK(total == 300000);
    CHECK(read == as_map(batch_sample(psi, 300000, 8)));
  }

  TEST_CASE("merge sums repeated ids") {
    SampleSet a{4, {BasisState::from_uint(3), BasisState::from_uint(9)}, {2, 1}, 3};
    SampleSet b{4, {BasisState::from_uint(5), BasisState::from_uint(9)}, {4, 1}, 5};
    const std::vector<SampleSet> parts{a, b};
    const auto m = merge_samples(parts);
    CHECK(m.states == std::vector<BasisState>{BasisState::from_uint(3), BasisState::from_uint(5), BasisState::from_uint(9)});
    CHECK(m.weights == std::vector<std::uint64_t>{2, 4, 2});
    CHECK(m.total == 8);
  }

  TEST_CASE("sample set checks catch broken invariants") {
    SampleSet s{4, {BasisState::from_uint(0b0011), BasisState::from_uint(0b1001)}, {1, 2}, 3};
    CHECK_NOTHROW(check_sample_set(s, 1, 1));
    s.total = 4;
    CHECK_THROWS_AS(check_sample_set(s, 1, 1), Error);
    s.total = 3;
    std::swap(s.states[0], s.states[1]);
    CHECK_THROWS_AS(check_sample_set(s, 1, 1), Error);
  }
}
