#include "nnqs/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "nnqs/error.hpp"
#include "nnqs/oracle.hpp"
#include "nnqs/parallel.hpp"
#include "nnqs/pauli_hamiltonian.hpp"
#include "nnqs/sampler.hpp"

namespace nnqs {

namespace {

namespace fs = std::filesystem;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

AnsatzConfig ansatz_for(const RunConfig& cfg, const PauliHamiltonian& h) {
  AnsatzConfig a = cfg.ansatz;
  a.n_qubits = h.n_qubits;
  a.n_up = h.n_up;
  a.n_down = h.n_down;
  a.validate();
  return a;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream os(path, std::ios::out | std::ios::binary | mode);
  if (!os) throw Error("cannot write '" + path + "'");
  return os;
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

RunOutcome run_training(const RunConfig& cfg, const std::string& resume, std::ostream& out, bool quiet) {
  set_worker_threads(cfg.threads);
  const PauliHamiltonian h = read_hamiltonian_file(cfg.hamiltonian);
  const CompressedHamiltonian c = compress(h);
  TrainState st(ansatz_for(cfg, h), cfg.train);
  if (!resume.empty()) st.restore(load_checkpoint(resume));

  fs::create_directories(cfg.output_dir);
  const std::string log_path = (fs::path(cfg.output_dir) / kLogFile).string();
  const std::string ck_path = (fs::path(cfg.output_dir) / kCheckpointFile).string();
  const bool append = !resume.empty() && fs::exists(log_path);
  std::ofstream log = open_out(log_path, append ? std::ios::app : std::ios::trunc);
  if (!append) write_log_header(log);

  if (!quiet) {
    out << "hamiltonian " << cfg.hamiltonian << ": " << h.n_qubits << " qubits, " << c.n_terms() << " terms, "
        << c.n_groups() << " flip masks\n"
        << "parameters " << st.replicas.front().n_params() << ", workers " << cfg.train.n_workers << ", mode "
        << to_string(cfg.train.energy_mode) << "\n";
  }
  const TrainResult res = train(st, c, [&](const IterationRecord& r) {
    write_log_row(log, r);
    if (cfg.checkpoint_interval > 0 && r.iteration % cfg.checkpoint_interval == 0) {
      log.flush();
      save_checkpoint(ck_path, st.checkpoint());
    }
  });
  log.flush();
  save_checkpoint(ck_path, st.checkpoint());

  RunOutcome o;
  o.result = res;
  o.iteration = st.iteration;
  o.params_hash = params_hash(st.replicas.front().params());
  o.mode = cfg.train.energy_mode;

  std::ofstream summary = open_out((fs::path(cfg.output_dir) / kSummaryFile).string());
  summary << "energy = " << fmt("%.12f", res.final_energy) << "\n"
          << "energy_imag = " << fmt("%.6e", res.last.mean.imag()) << "\n"
          << "variance = " << fmt("%.6e", res.last.variance) << "\n"
          << "mode = " << to_string(o.mode) << "\n"
          << "iteration = " << o.iteration << "\n"
          << "stop_reason = " << to_string(res.reason) << "\n"
          << "params_hash = " << o.params_hash << "\n";
  if (!quiet) {
    out << "final energy " << fmt("%.10f", res.final_energy) << " Ha (" << to_string(o.mode) << "), iteration "
        << o.iteration << ", stop: " << to_string(res.reason) << "\n";
  }
  return o;
}

int cmd_run(const RunOptions& opt, std::ostream& out) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.max_iters) cfg.train.max_iters = *opt.max_iters;
  if (opt.output_dir) cfg.output_dir = *opt.output_dir;
  const RunOutcome o = run_training(cfg, opt.resume, out, opt.quiet);
  return o.result.reason == StopReason::ImaginaryEnergy ? 3 : 0;
}

int cmd_exact(const std::string& ham_path, bool full_space, std::size_t max_dim, std::ostream& out) {
  const PauliHamiltonian h = read_hamiltonian_file(ham_path);
  const CompressedHamiltonian c = compress(h);
  OracleOptions opt;
  opt.max_dim = max_dim;
  opt.keep_vector = false;
  std::optional<std::pair<int, int>> sector;
  if (!full_space) sector = std::pair{h.n_up, h.n_down};
  const OracleResult r = ground_state(c, sector, opt);
  out << "e0 = " << fmt("%.10f", r.e0) << "\n"
      << "residual = " << fmt("%.3e", r.residual) << "\n"
      << "dimension = " << sector_dimension(h.n_qubits, sector) << (full_space ? " (full space)" : " (sector)") << "\n"
      << "iterations = " << r.iterations << "\n";
  return 0;
}

int cmd_ham_inspect(const std::string& ham_path, std::ostream& out) {
  const PauliHamiltonian h = read_hamiltonian_file(ham_path);
  const CompressedHamiltonian c = compress(h);
  const LayoutFootprint f = layout_footprint(c);
  out << "qubits = " << h.n_qubits << "\n"
      << "electrons = " << h.n_up << " " << h.n_down << "\n"
      << "terms = " << c.n_terms() << "\n"
      << "flip_masks = " << c.n_groups() << "\n"
      << "per_term_bytes = " << f.per_term_bytes << "\n"
      << "grouped_bytes = " << f.grouped_bytes << "\n"
      << "bitpacked_bytes = " << f.bitpacked_bytes << "\n"
      << "reduction = " << fmt("%.2f", 100.0 * f.reduction()) << "%\n";
  return 0;
}

int cmd_pes(const PesOptions& opt, std::ostream& out) {
  const RunConfig base = load_run_config(opt.config_path, false);
  std::ofstream file;
  if (!opt.csv_path.empty()) file = open_out(opt.csv_path);
  std::ostream& csv = opt.csv_path.empty() ? out : file;
  csv << "label,E_vmc,E_oracle,abs_error,status\r\n";
  int failures = 0;
  for (const auto& path : opt.hamiltonians) {
    const std::string label = fs::path(path).stem().string();
    std::string e_vmc, e_oracle, err, status = "ok";
    try {
      RunConfig cfg = base;
      cfg.hamiltonian = path;
      cfg.output_dir = (fs::path(base.output_dir) / label).string();
      const RunOutcome o = run_training(cfg, "", out, true);
      e_vmc = fmt("%.10f", o.result.final_energy);
      const PauliHamiltonian h = read_hamiltonian_file(path);
      const std::pair sector{h.n_up, h.n_down};
      if (sector_dimension(h.n_qubits, sector) <= opt.oracle_max_dim) {
        OracleOptions oo;
        oo.max_dim = opt.oracle_max_dim;
        oo.keep_vector = false;
        const double e0 = ground_state(compress(h), sector, oo).e0;
        e_oracle = fmt("%.10f", e0);
        err = fmt("%.3e", std::abs(o.result.final_energy - e0));
      } else {
        status = "oracle-skipped";
      }
    } catch (const std::exception& ex) {
      status = std::string("error: ") + ex.what();
      ++failures;
    }
    csv << csv_field(label) << ',' << e_vmc << ',' << e_oracle << ',' << err << ',' << csv_field(status) << "\r\n";
    csv.flush();
  }
  return failures == 0 ? 0 : 4;
}

int cmd_sample_debug(const SampleDebugOptions& opt, std::ostream& out) {
  const RunConfig cfg = load_run_config(opt.config_path);
  set_worker_threads(cfg.threads);
  const PauliHamiltonian h = read_hamiltonian_file(cfg.hamiltonian);
  const AnsatzConfig ac = ansatz_for(cfg, h);
  Ansatz psi(ac);
  if (!opt.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (!(ck.config == ac)) throw Error("checkpoint: ansatz config differs from the run config");
    psi.set_params(ck.params);
  }
  const std::size_t n_u_star = opt.n_u_star ? opt.n_u_star : std::size_t{1024} * static_cast<std::size_t>(opt.workers);
  const PartitionedSamples ps = partitioned_sample(psi, opt.samples, opt.workers, n_u_star, cfg.train.seed);
  if (!opt.csv_path.empty()) {
    std::ofstream f = open_out(opt.csv_path);
    write_samples_csv(f, ps.per_worker);
  } else {
    write_samples_csv(out, ps.per_worker);
  }
  out << "split_layer = " << ps.plan.split_layer << "\n";
  for (std::size_t w = 0; w < ps.per_worker.size(); ++w) {
    out << "worker " << w << ": unique = " << ps.per_worker[w].size() << ", weight = " << ps.per_worker[w].total << "\n";
  }
  out << "imbalance = " << fmt("%.4f", weight_imbalance(ps.per_worker)) << "\n";
  return 0;
}

}  // namespace nnqs
