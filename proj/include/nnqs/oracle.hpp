#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "nnqs/ansatz.hpp"
#include "nnqs/error.hpp"
#include "nnqs/pauli_hamiltonian.hpp"

namespace nnqs {

/// Sorted basis of a fixed (n_up, n_down) sector, or of the full space when
/// no sector is given.
class SectorBasis {
 public:
  SectorBasis(int n_qubits, std::optional<std::pair<int, int>> sector, std::size_t max_dim);

  int n_qubits() const noexcept { return n_qubits_; }
  std::size_t size() const noexcept { return states_.size(); }
  const std::vector<BasisState>& states() const noexcept { return states_; }
  const BasisState& operator[](std::size_t i) const noexcept { return states_[i]; }
  std::optional<std::size_t> index_of(const BasisState& x) const noexcept;

 private:
  /// Colex rank of the occupied orbitals of spin channel `spin` in x.
  std::uint64_t channel_rank(const BasisState& x, int spin) const noexcept;

  int n_qubits_;
  bool full_;
  int n_up_ = 0, n_down_ = 0;
  std::uint64_t down_dim_ = 0;
  BasisState up_mask_, down_mask_;
  std::vector<BasisState> states_;
  std::vector<std::uint32_t> sorted_pos_;  ///< product rank -> index in states_
  std::vector<std::vector<std::uint64_t>> choose_;
};

/// Number of states in the sector (full space when unset), saturating at
/// UINT64_MAX.
std::uint64_t sector_dimension(int n_qubits, std::optional<std::pair<int, int>> sector) noexcept;

/// y = H v over `basis`, one row per basis state, applying each flip-mask
/// group without forming the matrix.
template <typename Scalar>
void apply_hamiltonian(const CompressedHamiltonian& c, const SectorBasis& basis,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y);

struct KrylovOptions {
  double tol = 1e-9;
  int max_iters = 2000;    ///< total matrix-vector products
  int restart = 120;       ///< Krylov vectors kept before an explicit restart
  std::uint64_t seed = 7;
};

struct KrylovResult {
  double eigenvalue = 0.0;
  Eigen::VectorXd vector;  ///< unit norm
  double residual = 0.0;   ///< ||H v - e v||
  int iterations = 0;
};

/// Lowest eigenpair of a real symmetric operator by Lanczos with full
/// reorthogonalization, restarted from the current Ritz vector.
template <typename Scalar>
KrylovResult lanczos_lowest(
    Eigen::Index dim,
    const std::function<void(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>&, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>&)>&
        matvec,
    const KrylovOptions& opt);

struct OracleOptions {
  KrylovOptions krylov;
  std::size_t max_dim = std::size_t{1} << 20;
  bool keep_vector = true;
};

struct OracleResult {
  double e0 = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::vector<BasisState> basis;  ///< empty unless the vector is kept
  Eigen::VectorXd vector;
};

/// Ground state of `c` in `sector` (full 2^N space when unset). Throws
/// nnqs::Error if the dimension exceeds the cap and NumericalError if the
/// residual stays above 1e-8 after the iteration cap.
OracleResult ground_state(const CompressedHamiltonian& c, std::optional<std::pair<int, int>> sector,
                          const OracleOptions& opt = {});

/// A wavefunction given by a table of complex amplitudes. States absent from
/// the table, or with amplitude zero, report log_amp = -inf.
class TabulatedWavefunction final : public Wavefunction {
 public:
  TabulatedWavefunction(int n_qubits, int n_up, int n_down, std::vector<BasisState> states,
                        std::vector<std::complex<double>> amps);

  int n_qubits() const noexcept override { return n_qubits_; }
  int n_up() const noexcept override { return n_up_; }
  int n_down() const noexcept override { return n_down_; }
  std::vector<AmplitudePhase> log_amp_phase(std::span<const BasisState> states) const override;

 private:
  int n_qubits_, n_up_, n_down_;
  std::vector<BasisState> states_;
  std::vector<std::complex<double>> amps_;
};

/// Cap on the sector size enumerated by the exact-energy routines.
inline constexpr std::size_t kEnumerationCap = 1'000'000;

/// <Psi|H|Psi>/<Psi|Psi> by enumerating the sector of `psi`.
double exact_variational_energy(const CompressedHamiltonian& c, const Wavefunction& psi);

/// Central differences of exact_variational_energy for the listed coordinates.
Eigen::VectorXd finite_difference_gradient(const CompressedHamiltonian& c, const Ansatz& psi, double eps,
                                           std::span<const Eigen::Index> coords);
/// Every coordinate.
Eigen::VectorXd finite_difference_gradient(const CompressedHamiltonian& c, const Ansatz& psi, double eps);

/// E_loc(x) summed term by term with apply_pauli; no grouping, no table.
std::complex<double> brute_local_energy(const PauliHamiltonian& h, const Wavefunction& psi, const BasisState& x);

}  // namespace nnqs
