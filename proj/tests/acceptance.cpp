// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "nnqs/local_energy.hpp"
#include "nnqs/oracle.hpp"
#include "nnqs/sampler.hpp"
#include "nnqs/vmc.hpp"
#include "test_util.hpp"

using namespace nnqs;

namespace {

constexpr double kChemicalAccuracy = 1.6e-3;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::pair<int, int> sector_of(const PauliHamiltonian& h) { return {h.n_up, h.n_down}; }

Outcome oracle_fci_h2o() {
  const auto h = read_hamiltonian_file(testutil::data_path("h2o_sto3g.ham"));
  const auto t0 = Clock::now();
  const auto r = ground_state(compress(h), sector_of(h));
  const double secs = seconds_since(t0);
  const double err = std::abs(r.e0 - (-75.0155));
  return verdict(err <= 5e-5 && secs < 120.0, "e0 " + fmt("%.7f", r.e0) + ", |e0 - (-75.0155)| " + fmt("%.2e", err) +
                                                  " (tol 5e-5), " + fmt("%.1f", secs) + " s (limit 120 s)");
}

struct VmcPoint {
  double e_final = 0.0;
  double e0 = 0.0;
  std::uint64_t iterations = 0;
  double seconds = 0.0;
};

/// Trains with the default architecture and schedule, then runs the oracle.
VmcPoint vmc_point(const std::string& file, std::uint64_t max_iters, std::uint64_t seed) {
  const auto h = read_hamiltonian_file(testutil::data_path(file));
  const auto c = compress(h);
  AnsatzConfig a;
  a.n_qubits = h.n_qubits;
  a.n_up = h.n_up;
  a.n_down = h.n_down;
  a.seed = seed;
  TrainConfig t;
  t.max_iters = max_iters;
  t.seed = seed;
  TrainState st(a, t);
  const auto t0 = Clock::now();
  const auto res = train(st, c);
  VmcPoint p;
  p.seconds = seconds_since(t0);
  p.e_final = res.final_energy;
  p.iterations = res.iterations;
  p.e0 = ground_state(c, sector_of(h)).e0;
  return p;
}

Outcome vmc_h2() {
  const auto p = vmc_point("h2_sto3g.ham", 5000, 1);
  const double err = std::abs(p.e_final - p.e0);
  return verdict(err <= kChemicalAccuracy && p.iterations <= 5000 && p.seconds < 600.0,
                 "E " + fmt("%.7f", p.e_final) + ", oracle " + fmt("%.7f", p.e0) + ", |dE| " + fmt("%.2e", err) +
                     " (tol 1.6e-3), " + std::to_string(p.iterations) + " iterations, " + fmt("%.0f", p.seconds) +
                     " s (limit 600 s)");
}

Outcome beh2_pes(bool extended) {
  if (!extended) return {Status::Skip, "extended run, configure with -DNNQS_EXTENDED_TESTS=ON"};
  bool ok = true;
  std::string detail;
  for (const char* r : {"1.00", "1.50", "2.00", "2.50", "3.00"}) {
    const auto p = vmc_point(std::string("beh2_sto3g_r") + r + ".ham", 10000, 1);
    const double err = std::abs(p.e_final - p.e0);
    ok = ok && err <= kChemicalAccuracy;
    detail += std::string(detail.empty() ? "" : "; ") + "r=" + r + " |dE| " + fmt("%.2e", err);
    std::cerr << "  beh2 r=" << r << ": E " << fmt("%.7f", p.e_final) << ", oracle " << fmt("%.7f", p.e0) << ", "
              << fmt("%.0f", p.seconds) << " s\n";
  }
  return verdict(ok, detail + " (tol 1.6e-3 each)");
}

Outcome gradient_check() {
  const auto h = read_hamiltonian_file(testutil::data_path("h2_sto3g.ham"));
  const auto c = compress(h);
  std::mt19937_64 rng(2718);
  double worst = 0.0;
  for (std::uint64_t point = 0; point < 3; ++point) {
    const auto psi = testutil::scrambled(testutil::small_config(4, 1, 1, 10 + point), 20 + point, 1.5);
    const auto g = enumerated_estimate(c, psi).gradient;
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(psi.n_params()));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(20);
    const auto fd = finite_difference_gradient(c, psi, 1e-4, coords);
    for (std::size_t k = 0; k < coords.size(); ++k) {
      const double gi = g[coords[k]], fi = fd[static_cast<Eigen::Index>(k)];
      const double scale = std::max(std::abs(gi), std::abs(fi));
      worst = std::max(worst, scale == 0.0 ? 0.0 : std::abs(gi - fi) / scale);
    }
  }
  return verdict(worst <= 1e-4, "3 points x 20 coordinates, max relative error " + fmt("%.2e", worst) + " (tol 1e-4)");
}

Outcome sampler_fidelity() {
  const auto psi = testutil::scrambled(testutil::small_config(4, 1, 1), 8, 2.0);
  const std::uint64_t n_s = 1'000'000;
  const auto s = batch_sample(psi, n_s, 2024);
  const auto states = testutil::enumerate_sector(4, 1, 1);
  const auto ap = psi.log_amp_phase(states);
  std::map<BasisState, std::uint64_t> counts;
  for (std::size_t i = 0; i < s.size(); ++i) counts[s.states[i]] += s.weights[i];
  double tv = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    tv += std::abs(static_cast<double>(counts[states[i]]) / static_cast<double>(n_s) - std::exp(2.0 * ap[i].log_amp));
  }
  tv *= 0.5;

  const auto lih = read_hamiltonian_file(testutil::data_path("lih_sto3g.ham"));
  const auto big = testutil::scrambled(testutil::small_config(lih.n_qubits, lih.n_up, lih.n_down, 13), 14, 2.0);
  const auto whole = batch_sample(big, 1'000'000, 21);
  int checked = 0, equal = 0;
  for (int n_p : {1, 2, 4, 8}) {
    for (std::size_t n_u_star : {static_cast<std::size_t>(n_p), std::size_t{64}, std::size_t{1024} * static_cast<std::size_t>(n_p)}) {
      const auto ps = partitioned_sample(big, 1'000'000, n_p, n_u_star, 21);
      ++checked;
      if (merge_samples(ps.per_worker) == whole) ++equal;
    }
  }
  return verdict(tv <= 0.005 && equal == checked, "TV " + fmt("%.2e", tv) + " (tol 5e-3) at N_s=1e6; partition union exact in " +
                                                      std::to_string(equal) + "/" + std::to_string(checked) +
                                                      " runs over N_p in {1,2,4,8}");
}

Outcome local_energy_equivalence() {
  double dev = 0.0, eig = 0.0;
  for (const std::string file : {"h2_sto3g.ham", "lih_sto3g.ham"}) {
    const auto h = read_hamiltonian_file(testutil::data_path(file));
    const auto c = compress(h);
    const auto psi = testutil::scrambled(testutil::small_config(h.n_qubits, h.n_up, h.n_down, 31), 131, 1.5);
    const auto states = testutil::enumerate_sector(h.n_qubits, h.n_up, h.n_down);
    const auto lut = build_lookup(states, psi.log_amp_phase(states));
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> pick(0, states.size() - 1);
    std::vector<std::size_t> chunk;
    std::vector<BasisState> picked;
    for (int k = 0; k < 200; ++k) {
      chunk.push_back(pick(rng));
      picked.push_back(states[chunk.back()]);
    }
    const auto aware = local_energy_sample_aware(c, lut, chunk);
    const auto exact = local_energy_exact(c, psi, picked);
    for (std::size_t k = 0; k < picked.size(); ++k) {
      const auto brute = brute_local_energy(h, psi, picked[k]);
      dev = std::max({dev, std::abs(brute - exact[k]), std::abs(exact[k] - aware[k])});
    }

    OracleOptions opt;
    opt.krylov.tol = 1e-12;
    const auto gs = ground_state(c, sector_of(h), opt);
    std::vector<std::complex<double>> amps(gs.basis.size());
    for (std::size_t i = 0; i < amps.size(); ++i) amps[i] = gs.vector[static_cast<Eigen::Index>(i)];
    const auto glut = build_lookup(gs.basis, amps);
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < amps.size(); ++i) {
      if (std::abs(amps[i]) >= 1e-3) support.push_back(i);
    }
    for (const auto& e : local_energy_sample_aware(c, glut, support)) eig = std::max(eig, std::abs(e - gs.e0));
  }
  return verdict(dev <= 1e-10 && eig <= 1e-8, "H2 and LiH, 200 states each: max deviation " + fmt("%.2e", dev) +
                                                  " (tol 1e-10); eigenvector |E_loc - e0| " + fmt("%.2e", eig) +
                                                  " (tol 1e-8, states with |v| >= 1e-3)");
}

Outcome communication_volume() {
  const int n = 20, n_p = 64;
  const std::uint64_t n_u = 27000, m = 270000;
  InProcessWorld world(n_p);
  std::vector<std::vector<char>> parts(static_cast<std::size_t>(n_p));
  for (std::uint64_t u = 0; u < n_u; ++u) parts[u % n_p].push_back(0);
  world.allgather(parts, packed_bytes(n) + 16);
  const std::vector<std::complex<double>> partial(static_cast<std::size_t>(n_p), {1.0, 0.0});
  world.allreduce_energy(partial);
  const std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(n_p), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
  const std::vector<double> weights(static_cast<std::size_t>(n_p), 1.0 / n_p);
  world.allreduce_weighted(grads, weights);
  const auto counted = world.stats().total();
  const auto predicted = predicted_volume(n, n_u, n_p, m).total();
  const double rel = std::abs(static_cast<double>(counted) / 173e6 - 1.0);
  return verdict(rel <= 0.02 && counted == predicted,
                 "counted " + std::to_string(counted) + " B, predicted " + std::to_string(predicted) +
                     " B, relative to 173 MB " + fmt("%.2f", 100.0 * rel) + "% (tol 2%)");
}

Outcome compression() {
  double worst_ratio = 0.0;
  std::string detail;
  for (const char* file : {"h2o_sto3g.ham", "licl_sto3g.ham", "ph3_sto3g.ham"}) {
    const auto f = layout_footprint(compress(read_hamiltonian_file(testutil::data_path(file))));
    const double ratio = static_cast<double>(f.grouped_bytes) / static_cast<double>(f.per_term_bytes);
    worst_ratio = std::max(worst_ratio, ratio);
    detail += std::string(detail.empty() ? "" : ", ") + file + " " + fmt("%.1f", 100.0 * ratio) + "%";
  }
  std::mt19937_64 rng(2024);
  double recon = 0.0;
  int trials = 0;
  for (int n = 1; n <= 6; ++n) {
    const int max_terms = std::min(20, ((1 << (2 * n)) + (1 << n)) / 2);
    for (int rep = 0; rep < 10; ++rep, ++trials) {
      const auto h = testutil::random_hamiltonian(n, 1 + rep % max_terms, rng);
      const Eigen::MatrixXcd ref = testutil::dense_matrix(h);
      const auto c = compress(h);
      const auto dim = Eigen::Index{1} << n;
      Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
      for (std::uint64_t x = 0; x < static_cast<std::uint64_t>(dim); ++x) {
        for (std::size_t g = 0; g < c.n_groups(); ++g) {
          const auto [y, a] = c.group_amplitude(BasisState::from_uint(x), g);
          m(static_cast<Eigen::Index>(y.words[0]), static_cast<Eigen::Index>(x)) += a;
        }
      }
      recon = std::max(recon, (m - ref).cwiseAbs().maxCoeff() / (1.0 + ref.cwiseAbs().maxCoeff()));
    }
  }
  return verdict(worst_ratio <= 0.65 && recon <= 1e-15,
                 "grouped/per-term bytes: " + detail + " (limit 65%); dense reconstruction over " + std::to_string(trials) +
                     " random N<=6 Hamiltonians, max relative error " + fmt("%.1e", recon));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool extended = false;
  std::vector<int> only;
  app.add_flag("--extended", extended, "Run the hours-long BeH2 potential-energy surface");
  app.add_option("--only", only, "Criteria to run (default all)");
  CLI11_PARSE(app, argc, argv);

  std::map<int, Outcome> results;
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"oracle FCI energy, H2O STO-3G", oracle_fci_h2o}},
      {2, {"end-to-end VMC, H2 STO-3G", vmc_h2}},
      {3, {"BeH2 potential-energy surface, 5 bond lengths", [extended] { return beh2_pes(extended); }}},
      {4, {"gradient estimator vs finite differences", gradient_check}},
      {5, {"sampler fidelity and partition invariance", sampler_fidelity}},
      {6, {"local-energy equivalence", local_energy_equivalence}},
      {7, {"communication volume", communication_volume}},
      {8, {"compressed Hamiltonian layout", compression}},
  };
  const auto selected = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  int failures = 0;
  const auto report = [&](int k, const std::string& name, const Outcome& o) {
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Skip ? "SKIP" : "FAIL";
    std::cout << "[" << tag << "] criterion " << k << ": " << name << " -- " << o.detail << std::endl;
    if (o.status == Status::Fail) ++failures;
  };
  for (const auto& [k, entry] : criteria) {
    if (!selected(k)) continue;
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("error: ") + e.what()};
    }
    results[k] = o;
    report(k, entry.first, o);
  }
  if (selected(9)) {
    bool substitutes = true;
    for (int k : {4, 5, 6, 7, 8}) {
      const auto it = results.find(k);
      substitutes = substitutes && it != results.end() && it->second.status == Status::Pass;
    }
    report(9, "desk-scale substitution",
           verdict(substitutes,
                   "120-qubit scaling, 64-GPU efficiency, 20-30 qubit VMC rows and 56/92-qubit H2 PES are not "
                   "reproducible here; substituted by criteria 4-8" +
                       std::string(substitutes ? "" : ", which did not all run and pass")));
  }
  return failures == 0 ? 0 : 1;
}
