#include "nnqs/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nnqs/parallel.hpp"

namespace nnqs {

namespace {

constexpr std::size_t kRowChunk = 256;

std::uint64_t binomial(int n, int k) noexcept {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (r > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(r);
}

/// All `slots`-bit patterns with `ones` bits set, ascending.
std::vector<std::uint64_t> combinations(int slots, int ones) {
  std::vector<std::uint64_t> out;
  if (ones == 0) return {0};
  if (ones > slots) return out;
  std::uint64_t v = (ones == 64) ? ~0ull : ((std::uint64_t{1} << ones) - 1);
  const std::uint64_t limit = slots == 64 ? 0 : (std::uint64_t{1} << slots);
  while (true) {
    out.push_back(v);
    const std::uint64_t t = v | (v - 1);
    if (t == ~0ull) break;
    const std::uint64_t next = (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
    if (next <= v || (limit != 0 && next >= limit)) break;
    v = next;
  }
  return out;
}

/// Places bit i of `pattern` on qubit 2i + spin.
BasisState spread(std::uint64_t pattern, int spin) noexcept {
  BasisState s;
  for (int i = 0; pattern != 0; ++i, pattern >>= 1) {
    if (pattern & 1) s.set(2 * i + spin);
  }
  return s;
}

}  // namespace

std::uint64_t sector_dimension(int n_qubits, std::optional<std::pair<int, int>> sector) noexcept {
  if (!sector) return n_qubits >= 64 ? std::numeric_limits<std::uint64_t>::max() : (std::uint64_t{1} << n_qubits);
  const std::uint64_t a = binomial((n_qubits + 1) / 2, sector->first);
  const std::uint64_t b = binomial(n_qubits / 2, sector->second);
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}

SectorBasis::SectorBasis(int n_qubits, std::optional<std::pair<int, int>> sector, std::size_t max_dim)
    : n_qubits_(n_qubits), full_(!sector) {
  const std::uint64_t dim = sector_dimension(n_qubits, sector);
  if (dim > max_dim) {
    throw Error("basis dimension " + std::to_string(dim) + " exceeds the cap of " + std::to_string(max_dim));
  }
  states_.reserve(static_cast<std::size_t>(dim));
  if (full_) {
    for (std::uint64_t v = 0; v < dim; ++v) states_.push_back(BasisState::from_uint(v));
    return;
  }
  n_up_ = sector->first;
  n_down_ = sector->second;
  up_mask_ = spin_mask(n_qubits, 0);
  down_mask_ = spin_mask(n_qubits, 1);
  const int slots = (n_qubits + 1) / 2;
  choose_.assign(static_cast<std::size_t>(slots + 1), std::vector<std::uint64_t>(static_cast<std::size_t>(slots + 2), 0));
  for (int n = 0; n <= slots; ++n) {
    for (int k = 0; k <= slots + 1; ++k) choose_[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] = binomial(n, k);
  }
  const auto ups = combinations(slots, n_up_);
  const auto downs = combinations(n_qubits / 2, n_down_);
  down_dim_ = downs.size();
  for (auto u : ups) {
    const BasisState su = spread(u, 0);
    for (auto d : downs) states_.push_back(su | spread(d, 1));
  }
  // states_ is in product-rank order here; sort it and keep the permutation.
  std::vector<std::uint32_t> order(states_.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return states_[a] < states_[b]; });
  std::vector<BasisState> sorted(states_.size());
  sorted_pos_.resize(states_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted[i] = states_[order[i]];
    sorted_pos_[order[i]] = static_cast<std::uint32_t>(i);
  }
  states_ = std::move(sorted);
}

std::uint64_t SectorBasis::channel_rank(const BasisState& x, int spin) const noexcept {
  std::uint64_t r = 0;
  std::size_t k = 1;
  for (int w = 0; w < 2; ++w) {
    std::uint64_t bits = x.words[static_cast<std::size_t>(w)] & (spin == 0 ? 0x5555555555555555ull : 0xAAAAAAAAAAAAAAAAull);
    while (bits) {
      const int j = std::countr_zero(bits) + 64 * w;
      r += choose_[static_cast<std::size_t>(j / 2)][k++];
      bits &= bits - 1;
    }
  }
  return r;
}

std::optional<std::size_t> SectorBasis::index_of(const BasisState& x) const noexcept {
  if (full_) {
    if (x.words[1] != 0 || x.words[0] >= states_.size()) return std::nullopt;
    return static_cast<std::size_t>(x.words[0]);
  }
  const BasisState up = x & up_mask_, down = x & down_mask_;
  if (up.popcount() != n_up_ || down.popcount() != n_down_ || (up | down) != x) return std::nullopt;
  const std::uint64_t rank = channel_rank(x, 0) * down_dim_ + channel_rank(x, 1);
  return static_cast<std::size_t>(sorted_pos_[static_cast<std::size_t>(rank)]);
}

template <typename Scalar>
void apply_hamiltonian(const CompressedHamiltonian& c, const SectorBasis& basis,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y) {
  const std::size_t dim = basis.size();
  y.resize(static_cast<Eigen::Index>(dim));
  parallel_for((dim + kRowChunk - 1) / kRowChunk, [&](std::size_t chunk) {
    const std::size_t end = std::min(dim, (chunk + 1) * kRowChunk);
    for (std::size_t i = chunk * kRowChunk; i < end; ++i) {
      const BasisState& x = basis[i];
      Scalar acc{0};
      for (std::size_t g = 0; g < c.n_groups(); ++g) {
        const auto j = basis.index_of(x ^ c.flip_masks[g]);
        if (!j) continue;
        acc += c.group_coefficient(x, g) * v[static_cast<Eigen::Index>(*j)];
      }
      y[static_cast<Eigen::Index>(i)] = acc;
    }
  });
}

template void apply_hamiltonian<double>(const CompressedHamiltonian&, const SectorBasis&, const Eigen::VectorXd&,
                                        Eigen::VectorXd&);
template void apply_hamiltonian<std::complex<double>>(const CompressedHamiltonian&, const SectorBasis&,
                                                      const Eigen::VectorXcd&, Eigen::VectorXcd&);

template <typename Scalar>
KrylovResult lanczos_lowest(
    Eigen::Index dim,
    const std::function<void(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>&, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>&)>&
        matvec,
    const KrylovOptions& opt) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (dim < 1) throw Error("lanczos: empty space");

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Vec v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = Scalar(uni(rng));
  v.normalize();

  // Keep the Krylov block under roughly 256 MB.
  const Eigen::Index mem_cap = std::max<Eigen::Index>(20, static_cast<Eigen::Index>(32'000'000 / dim));
  const Eigen::Index m_max = std::min<Eigen::Index>({static_cast<Eigen::Index>(opt.restart), mem_cap, dim});

  KrylovResult res;
  Vec w, hv;
  while (true) {
    Mat V(dim, m_max + 1);
    std::vector<double> alpha, beta;
    V.col(0) = v;
    Eigen::VectorXd ritz;
    Eigen::Index m = 0;
    for (Eigen::Index j = 0; j < m_max; ++j) {
      matvec(V.col(j), w);
      ++res.iterations;
      alpha.push_back(static_cast<double>(V.col(j).dot(w)));
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) {
        const Vec coef = V.leftCols(j + 1).transpose() * w;
        w.noalias() -= V.leftCols(j + 1) * coef;
      }
      const double b = static_cast<double>(w.norm());
      m = j + 1;
      Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd e = Eigen::Map<const Eigen::VectorXd>(beta.data(), m - 1);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
      tri.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
      ritz = tri.eigenvectors().col(0);
      const double est = std::abs(b * ritz[m - 1]);
      if (est < 0.1 * opt.tol || b < 1e-13 || res.iterations >= opt.max_iters || j + 1 == m_max) break;
      beta.push_back(b);
      V.col(j + 1) = w / Scalar(b);
    }
    v = V.leftCols(m) * ritz.cast<Scalar>();
    v.normalize();
    matvec(v, hv);
    ++res.iterations;
    const double rq = static_cast<double>(v.dot(hv));
    const double r = static_cast<double>((hv - Scalar(rq) * v).norm());
    res.eigenvalue = rq;
    res.residual = r;
    if (r <= opt.tol) break;
    if (res.iterations >= opt.max_iters) break;
  }
  res.vector = v.template cast<double>();
  return res;
}

template KrylovResult lanczos_lowest<double>(Eigen::Index,
                                             const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>&,
                                             const KrylovOptions&);

OracleResult ground_state(const CompressedHamiltonian& c, std::optional<std::pair<int, int>> sector,
                          const OracleOptions& opt) {
  const SectorBasis basis(c.n_qubits, sector, opt.max_dim);
  const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> mv =
      [&](const Eigen::VectorXd& v, Eigen::VectorXd& y) { apply_hamiltonian<double>(c, basis, v, y); };
  const KrylovResult kr = lanczos_lowest<double>(static_cast<Eigen::Index>(basis.size()), mv, opt.krylov);
  if (kr.residual > 1e-8) {
    throw NumericalError("ground_state: residual " + std::to_string(kr.residual) + " after " +
                         std::to_string(kr.iterations) + " iterations");
  }
  OracleResult out;
  out.e0 = kr.eigenvalue;
  out.residual = kr.residual;
  out.iterations = kr.iterations;
  if (opt.keep_vector) {
    out.basis = basis.states();
    out.vector = kr.vector;
  }
  return out;
}

TabulatedWavefunction::TabulatedWavefunction(int n_qubits, int n_up, int n_down, std::vector<BasisState> states,
                                             std::vector<std::complex<double>> amps)
    : n_qubits_(n_qubits), n_up_(n_up), n_down_(n_down) {
  if (states.size() != amps.size()) throw Error("tabulated wavefunction: states and amplitudes differ in length");
  std::vector<std::size_t> order(states.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return states[a] < states[b]; });
  for (std::size_t i : order) {
    states_.push_back(states[i]);
    amps_.push_back(amps[i]);
  }
}

std::vector<AmplitudePhase> TabulatedWavefunction::log_amp_phase(std::span<const BasisState> states) const {
  std::vector<AmplitudePhase> out(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto it = std::lower_bound(states_.begin(), states_.end(), states[k]);
    if (it == states_.end() || *it != states[k]) {
      out[k] = {-std::numeric_limits<double>::infinity(), 0.0};
      continue;
    }
    const auto z = amps_[static_cast<std::size_t>(it - states_.begin())];
    out[k] = {std::log(std::abs(z)), std::arg(z)};
  }
  return out;
}

double exact_variational_energy(const CompressedHamiltonian& c, const Wavefunction& psi) {
  const SectorBasis basis(psi.n_qubits(), std::pair{psi.n_up(), psi.n_down()}, kEnumerationCap);
  const auto amps = psi.log_amp_phase(basis.states());
  double lmax = -std::numeric_limits<double>::infinity();
  for (const auto& a : amps) lmax = std::max(lmax, a.log_amp);
  if (!std::isfinite(lmax)) throw NumericalError("exact_variational_energy: wavefunction vanishes on the sector");
  Eigen::VectorXcd v(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < amps.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] =
        std::isfinite(amps[i].log_amp) ? std::polar(std::exp(amps[i].log_amp - lmax), amps[i].phase) : 0.0;
  }
  Eigen::VectorXcd hv;
  apply_hamiltonian<std::complex<double>>(c, basis, v, hv);
  return v.dot(hv).real() / v.squaredNorm();
}

Eigen::VectorXd finite_difference_gradient(const CompressedHamiltonian& c, const Ansatz& psi, double eps,
                                           std::span<const Eigen::Index> coords) {
  if (!(eps > 0.0)) throw Error("finite_difference_gradient: eps must be positive");
  Eigen::VectorXd g(static_cast<Eigen::Index>(coords.size()));
  Ansatz probe = psi;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const Eigen::Index j = coords[k];
    const double p0 = psi.params()[j];
    probe.mutable_params()[j] = p0 + eps;
    const double up = exact_variational_energy(c, probe);
    probe.mutable_params()[j] = p0 - eps;
    const double down = exact_variational_energy(c, probe);
    probe.mutable_params()[j] = p0;
    g[static_cast<Eigen::Index>(k)] = (up - down) / (2.0 * eps);
  }
  return g;
}

Eigen::VectorXd finite_difference_gradient(const CompressedHamiltonian& c, const Ansatz& psi, double eps) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(psi.n_params()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  return finite_difference_gradient(c, psi, eps, all);
}

std::complex<double> brute_local_energy(const PauliHamiltonian& h, const Wavefunction& psi, const BasisState& x) {
  const int n = psi.n_qubits(), nu = psi.n_up(), nd = psi.n_down();
  std::vector<BasisState> partners;
  std::vector<std::complex<double>> weights;
  partners.reserve(h.terms.size() + 1);
  partners.push_back(x);
  for (const auto& t : h.terms) {
    const auto [y, phase] = apply_pauli(t.ops, x);
    if (!in_sector(y, n, nu, nd)) continue;
    partners.push_back(y);
    // <x|P|y> is the conjugate of <y|P|x> for Hermitian P.
    weights.push_back(t.coefficient * std::conj(phase));
  }
  const auto amps = psi.log_amp_phase(partners);
  const AmplitudePhase ax = amps[0];
  std::complex<double> e = 0.0;
  for (std::size_t k = 1; k < partners.size(); ++k) {
    if (!std::isfinite(amps[k].log_amp)) continue;
    e += weights[k - 1] * std::polar(std::exp(amps[k].log_amp - ax.log_amp), amps[k].phase - ax.phase);
  }
  return e;
}

}  // namespace nnqs
