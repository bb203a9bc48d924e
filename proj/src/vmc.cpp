#include "nnqs/vmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <ostream>

#include "nnqs/error.hpp"
#include "nnqs/oracle.hpp"
#include "nnqs/parallel.hpp"

namespace nnqs {

namespace {

constexpr std::uint64_t kAmplitudeBytes = 16;
constexpr std::uint64_t kEnergyBytes = 16;
constexpr std::uint64_t kRealBytes = 8;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct GatheredSample {
  BasisState state;
  std::complex<double> amp;
};

}  // namespace

EnergyEstimate estimate_energy(const SampleSet& s, std::span<const std::complex<double>> e_loc) {
  if (e_loc.size() != s.size()) {
    throw Error("estimate_energy: " + std::to_string(s.size()) + " samples but " + std::to_string(e_loc.size()) +
                " local energies");
  }
  if (s.total == 0) throw Error("estimate_energy: empty sample set");
  const double n = static_cast<double>(s.total);
  std::complex<double> sum = 0.0;
  for (std::size_t u = 0; u < s.size(); ++u) sum += static_cast<double>(s.weights[u]) * e_loc[u];
  EnergyEstimate est;
  est.mean = sum / n;
  double var = 0.0;
  for (std::size_t u = 0; u < s.size(); ++u) var += static_cast<double>(s.weights[u]) * std::norm(e_loc[u] - est.mean);
  est.variance = var / n;
  est.n_unique = s.size();
  est.n_samples = s.total;
  return est;
}

void gradient_weights(std::span<const std::uint64_t> weights, std::span<const std::complex<double>> e_loc,
                      std::complex<double> mean, double norm, std::vector<double>& a, std::vector<double>& b) {
  a.resize(weights.size());
  b.resize(weights.size());
  for (std::size_t u = 0; u < weights.size(); ++u) {
    const std::complex<double> d = e_loc[u] - mean;
    const double w = 2.0 * static_cast<double>(weights[u]) / norm;
    a[u] = w * d.real();
    b[u] = w * d.imag();
  }
}

Eigen::VectorXd estimate_gradient(const Ansatz& psi, const SampleSet& s, std::span<const std::complex<double>> e_loc,
                                  const EnergyEstimate& est) {
  if (e_loc.size() != s.size()) throw Error("estimate_gradient: sample and local-energy counts differ");
  std::vector<double> a, b;
  gradient_weights(s.weights, e_loc, est.mean, static_cast<double>(s.total), a, b);
  return psi.backward(s.states, a, b);
}

EnumeratedEstimate enumerated_estimate(const CompressedHamiltonian& c, const Ansatz& psi) {
  const SectorBasis basis(psi.n_qubits(), std::pair{psi.n_up(), psi.n_down()}, kEnumerationCap);
  const auto& states = basis.states();
  const auto amps = psi.log_amp_phase(states);
  double max_log = -std::numeric_limits<double>::infinity();
  for (const auto& ap : amps) max_log = std::max(max_log, ap.log_amp);
  std::vector<double> p(states.size());
  double norm = 0.0;
  for (std::size_t u = 0; u < states.size(); ++u) {
    p[u] = std::exp(2.0 * (amps[u].log_amp - max_log));
    norm += p[u];
  }
  for (auto& v : p) v /= norm;
  const auto e_loc = local_energy_exact(c, psi, states);
  EnumeratedEstimate est;
  est.mean = 0.0;
  for (std::size_t u = 0; u < states.size(); ++u) est.mean += p[u] * e_loc[u];
  std::vector<double> a(states.size()), b(states.size());
  for (std::size_t u = 0; u < states.size(); ++u) {
    const std::complex<double> d = e_loc[u] - est.mean;
    est.variance += p[u] * std::norm(d);
    a[u] = 2.0 * p[u] * d.real();
    b[u] = 2.0 * p[u] * d.imag();
  }
  est.gradient = psi.backward(states, a, b);
  return est;
}

double learning_rate(std::uint64_t i, int d_model, int s_warmup) {
  if (i < 1) throw Error("learning_rate: iteration counter starts at 1");
  const double x = static_cast<double>(i);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(x, -0.5), x * std::pow(static_cast<double>(s_warmup), -1.5));
}

void optimizer_step(Eigen::VectorXd& p, const Eigen::VectorXd& g, AdamWState& state, double alpha,
                    const AdamWConfig& cfg) {
  if (g.size() != p.size()) throw Error("optimizer_step: gradient length differs from the parameter length");
  if (state.m.size() != p.size()) {
    state.m = Eigen::VectorXd::Zero(p.size());
    state.v = Eigen::VectorXd::Zero(p.size());
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const Eigen::VectorXd update =
      (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps) + cfg.weight_decay * p.array();
  if (!update.allFinite()) throw NumericalError("optimizer_step: non-finite update at step " + std::to_string(state.step));
  p -= alpha * update;
}

CollectiveStats predicted_volume(int n_qubits, std::uint64_t n_unique, int n_workers, std::uint64_t n_params) {
  const auto np = static_cast<std::uint64_t>(n_workers);
  CollectiveStats s;
  s.allgather = n_unique * np * (packed_bytes(n_qubits) + kAmplitudeBytes);
  s.energy_allreduce = kEnergyBytes * np;
  s.param_allreduce = kRealBytes * n_params * np;
  return s;
}

InProcessWorld::InProcessWorld(int n_workers) : n_workers_(n_workers) {
  if (n_workers < 1) throw Error("world size must be at least 1");
}

std::complex<double> InProcessWorld::allreduce_energy(std::span<const std::complex<double>> per_rank) {
  std::complex<double> s = per_rank[0];
  for (std::size_t r = 1; r < per_rank.size(); ++r) s += per_rank[r];
  stats_.energy_allreduce += kEnergyBytes * static_cast<std::uint64_t>(n_workers_);
  return s;
}

double InProcessWorld::allreduce_diagnostic(std::span<const double> per_rank) {
  double s = per_rank[0];
  for (std::size_t r = 1; r < per_rank.size(); ++r) s += per_rank[r];
  stats_.diagnostic += kRealBytes * static_cast<std::uint64_t>(n_workers_);
  return s;
}

Eigen::VectorXd InProcessWorld::allreduce_weighted(std::span<const Eigen::VectorXd> vectors,
                                                   std::span<const double> weights) {
  Eigen::VectorXd s = weights[0] * vectors[0];
  for (std::size_t r = 1; r < vectors.size(); ++r) s += weights[r] * vectors[r];
  stats_.param_allreduce +=
      kRealBytes * static_cast<std::uint64_t>(s.size()) * static_cast<std::uint64_t>(n_workers_);
  return s;
}

std::string to_string(EnergyMode m) { return m == EnergyMode::SampleAware ? "sample-aware" : "exact"; }

EnergyMode parse_energy_mode(const std::string& s) {
  if (s == "sample-aware") return EnergyMode::SampleAware;
  if (s == "exact") return EnergyMode::Exact;
  throw Error("unknown energy mode '" + s + "' (expected sample-aware or exact)");
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(std::string("train config: ") + what);
  };
  need(max_iters >= 1, "max_iters must be positive");
  need(warmup >= 1, "warmup must be positive");
  need(samples_initial >= 1, "samples_initial must be positive");
  need(samples_ramp_factor >= 1, "samples_ramp_factor must be at least 1");
  need(samples_ramp_interval >= 1, "samples_ramp_interval must be positive");
  need(samples_max >= samples_initial, "samples_max must not be below samples_initial");
  need(n_workers >= 1, "n_workers must be positive");
  need(effective_n_u_star() >= static_cast<std::size_t>(n_workers), "n_u_star must be at least n_workers");
  need(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1, "betas must lie in [0, 1)");
  need(adam.eps > 0, "eps must be positive");
  need(adam.weight_decay >= 0, "weight_decay must be nonnegative");
  need(plateau_window >= 1 && plateau_rtol >= 0, "plateau settings must be positive");
  need(imag_abort_ratio > 0 && imag_abort_window >= 1, "imaginary-energy abort settings must be positive");
}

std::uint64_t sample_budget(std::uint64_t i, const TrainConfig& cfg) {
  if (i <= cfg.samples_initial_iters) return cfg.samples_initial;
  const std::uint64_t steps = (i - cfg.samples_initial_iters + cfg.samples_ramp_interval - 1) / cfg.samples_ramp_interval;
  std::uint64_t n = cfg.samples_initial;
  for (std::uint64_t k = 0; k < steps && n < cfg.samples_max; ++k) {
    if (n > cfg.samples_max / cfg.samples_ramp_factor) return cfg.samples_max;
    n *= cfg.samples_ramp_factor;
  }
  return std::min(n, cfg.samples_max);
}

std::uint64_t iteration_seed(std::uint64_t seed, std::uint64_t i) noexcept {
  return node_seed(seed, -1, BasisState::from_uint(i));
}

TrainState::TrainState(const AnsatzConfig& ansatz, const TrainConfig& train) : config(train) {
  config.validate();
  const Ansatz first(ansatz);
  replicas.assign(static_cast<std::size_t>(config.n_workers), first);
  optimizers.resize(static_cast<std::size_t>(config.n_workers));
}

void TrainState::restore(const Checkpoint& ck) {
  if (!(ck.config == replicas.front().config())) throw Error("checkpoint: ansatz config differs from the run config");
  AdamWState opt;
  if (ck.adam_m.size() > 0) {
    opt.m = ck.adam_m;
    opt.v = ck.adam_v;
    opt.step = ck.adam_step;
  }
  for (auto& r : replicas) r.set_params(ck.params);
  for (auto& o : optimizers) o = opt;
  iteration = ck.iteration;
}

Checkpoint TrainState::checkpoint() const {
  Checkpoint ck;
  ck.config = replicas.front().config();
  ck.iteration = iteration;
  ck.params = replicas.front().params();
  ck.adam_m = optimizers.front().m;
  ck.adam_v = optimizers.front().v;
  ck.adam_step = optimizers.front().step;
  return ck;
}

IterationRecord train_iteration(TrainState& st, const CompressedHamiltonian& c, InProcessWorld& world) {
  const TrainConfig& cfg = st.config;
  const int np = world.size();
  if (np != cfg.n_workers) throw Error("train_iteration: world size differs from n_workers");
  const auto nw = static_cast<std::size_t>(np);
  world.reset_stats();

  IterationRecord rec;
  rec.iteration = st.iteration + 1;
  rec.n_samples = sample_budget(rec.iteration, cfg);
  rec.learning_rate = learning_rate(rec.iteration, st.replicas.front().config().d_model, cfg.warmup);

  // Stage 1: the prefix replay is identical on every rank, so it runs once.
  auto t0 = Clock::now();
  const PartitionedSamples parts = partitioned_sample(st.replicas.front(), rec.n_samples, np,
                                                      cfg.effective_n_u_star(), iteration_seed(cfg.seed, rec.iteration));
  rec.split_layer = parts.plan.split_layer;
  std::vector<std::vector<GatheredSample>> local(nw);
  parallel_for(nw, [&](std::size_t r) {
    const SampleSet& s = parts.per_worker[r];
    const auto amps = st.replicas[r].log_amp_phase(s.states);
    local[r].resize(s.size());
    for (std::size_t u = 0; u < s.size(); ++u) {
      local[r][u] = {s.states[u], std::polar(std::exp(amps[u].log_amp), amps[u].phase)};
    }
  });
  rec.stage_seconds[0] = seconds_since(t0);

  // Stage 2: allgather of (packed state, complex amplitude).
  t0 = Clock::now();
  auto gathered = world.allgather(local, packed_bytes(c.n_qubits) + kAmplitudeBytes);
  std::sort(gathered.begin(), gathered.end(),
            [](const GatheredSample& a, const GatheredSample& b) { return a.state < b.state; });
  std::vector<BasisState> ids(gathered.size());
  std::vector<std::complex<double>> amps(gathered.size());
  for (std::size_t k = 0; k < gathered.size(); ++k) {
    ids[k] = gathered[k].state;
    amps[k] = gathered[k].amp;
  }
  const WavefunctionLookup lut = build_lookup(ids, amps);
  rec.stage_seconds[1] = seconds_since(t0);

  // Stage 3: local energies of each rank's own samples.
  t0 = Clock::now();
  std::vector<std::vector<std::complex<double>>> e_loc(nw);
  std::vector<LocalEnergyCounters> counts(nw);
  for (std::size_t r = 0; r < nw; ++r) {
    const SampleSet& s = parts.per_worker[r];
    if (cfg.energy_mode == EnergyMode::SampleAware) {
      std::vector<std::size_t> idx(s.size());
      for (std::size_t u = 0; u < s.size(); ++u) idx[u] = *lut.index_of(s.states[u]);
      e_loc[r] = local_energy_sample_aware(c, lut, idx, &counts[r]);
    } else {
      e_loc[r] = local_energy_exact(c, st.replicas[r], s.states);
    }
    rec.lookups += counts[r];
  }
  rec.stage_seconds[2] = seconds_since(t0);

  // Stage 4: energy allreduce, then the variance as a diagnostic reduction.
  t0 = Clock::now();
  const double n_total = static_cast<double>(rec.n_samples);
  std::vector<std::complex<double>> partial(nw, 0.0);
  for (std::size_t r = 0; r < nw; ++r) {
    const SampleSet& s = parts.per_worker[r];
    for (std::size_t u = 0; u < s.size(); ++u) partial[r] += static_cast<double>(s.weights[u]) * e_loc[r][u];
  }
  rec.energy.mean = world.allreduce_energy(partial) / n_total;
  std::vector<double> var_partial(nw, 0.0);
  for (std::size_t r = 0; r < nw; ++r) {
    const SampleSet& s = parts.per_worker[r];
    for (std::size_t u = 0; u < s.size(); ++u) {
      var_partial[r] += static_cast<double>(s.weights[u]) * std::norm(e_loc[r][u] - rec.energy.mean);
    }
  }
  rec.energy.variance = world.allreduce_diagnostic(var_partial) / n_total;
  rec.energy.n_unique = gathered.size();
  rec.energy.n_samples = rec.n_samples;
  rec.stage_seconds[3] = seconds_since(t0);

  // Stage 5: each rank differentiates its own chunk, normalized by its own weight.
  t0 = Clock::now();
  std::vector<Eigen::VectorXd> grads(nw);
  std::vector<double> fractions(nw);
  const Eigen::Index m = st.replicas.front().n_params();
  for (std::size_t r = 0; r < nw; ++r) {
    const SampleSet& s = parts.per_worker[r];
    fractions[r] = static_cast<double>(s.total) / n_total;
    if (s.total == 0) {
      grads[r] = Eigen::VectorXd::Zero(m);
      continue;
    }
    std::vector<double> a, b;
    gradient_weights(s.weights, e_loc[r], rec.energy.mean, static_cast<double>(s.total), a, b);
    grads[r] = st.replicas[r].backward(s.states, a, b);
  }
  rec.stage_seconds[4] = seconds_since(t0);

  // Stage 6: weighted gradient average, replicated optimizer step, consensus.
  t0 = Clock::now();
  rec.gradient = world.allreduce_weighted(grads, fractions);
  for (std::size_t r = 0; r < nw; ++r) {
    optimizer_step(st.replicas[r].mutable_params(), rec.gradient, st.optimizers[r], rec.learning_rate, cfg.adam);
  }
  rec.params_hash = params_hash(st.replicas.front().params());
  for (std::size_t r = 1; r < nw; ++r) {
    if (params_hash(st.replicas[r].params()) != rec.params_hash) {
      throw Error("worker desynchronization: rank " + std::to_string(r) + " parameter hash differs from rank 0 at iteration " +
                  std::to_string(rec.iteration));
    }
  }
  st.iteration = rec.iteration;
  rec.stage_seconds[5] = seconds_since(t0);
  rec.bytes = world.stats();
  return rec;
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxIters: return "max-iters";
    case StopReason::Plateau: return "plateau";
    case StopReason::ImaginaryEnergy: return "imaginary-energy";
  }
  return "unknown";
}

TrainResult train(TrainState& st, const CompressedHamiltonian& c,
                  const std::function<void(const IterationRecord&)>& on_iteration) {
  const TrainConfig& cfg = st.config;
  InProcessWorld world(cfg.n_workers);
  std::deque<double> history;
  std::uint64_t imag_streak = 0;
  TrainResult res;
  while (st.iteration < cfg.max_iters) {
    const IterationRecord rec = train_iteration(st, c, world);
    if (on_iteration) on_iteration(rec);
    res.last = rec.energy;
    res.final_energy = rec.energy.mean.real();
    ++res.iterations;

    const double re = rec.energy.mean.real(), im = rec.energy.mean.imag();
    imag_streak = std::abs(im) > cfg.imag_abort_ratio * std::abs(re) ? imag_streak + 1 : 0;
    if (imag_streak >= cfg.imag_abort_window) {
      res.reason = StopReason::ImaginaryEnergy;
      return res;
    }
    history.push_back(re);
    if (history.size() > cfg.plateau_window) {
      const double old = history.front();
      history.pop_front();
      if (std::abs(re - old) < cfg.plateau_rtol * std::abs(re)) {
        res.reason = StopReason::Plateau;
        return res;
      }
    }
  }
  res.reason = StopReason::MaxIters;
  return res;
}

void write_log_header(std::ostream& os) {
  os << "iteration,E_mean_re,E_mean_im,variance,N_u,N_s,learning_rate,"
        "t_sample,t_gather,t_local_energy,t_energy_reduce,t_backward,t_update,"
        "bytes_allgather,bytes_energy,bytes_params\r\n";
}

void write_log_row(std::ostream& os, const IterationRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%zu,%llu,%.17g,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%llu,%llu,%llu\r\n",
                static_cast<unsigned long long>(r.iteration), r.energy.mean.real(), r.energy.mean.imag(),
                r.energy.variance, r.energy.n_unique, static_cast<unsigned long long>(r.n_samples), r.learning_rate,
                r.stage_seconds[0], r.stage_seconds[1], r.stage_seconds[2], r.stage_seconds[3], r.stage_seconds[4],
                r.stage_seconds[5], static_cast<unsigned long long>(r.bytes.allgather),
                static_cast<unsigned long long>(r.bytes.energy_allreduce),
                static_cast<unsigned long long>(r.bytes.param_allreduce));
  os << buf;
}

}  // namespace nnqs
