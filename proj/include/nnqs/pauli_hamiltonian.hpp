#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nnqs/basis_state.hpp"

namespace nnqs {

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

struct PauliTerm {
  std::complex<double> coefficient;
  std::vector<Pauli> ops;  // ops[j] acts on qubit j

  int y_count() const noexcept;
  /// Bit j set iff ops[j] is X or Y.
  BasisState flip_mask() const noexcept;
  /// Bit j set iff ops[j] is Y or Z.
  BasisState sign_mask() const noexcept;
  std::string op_string() const;

  bool operator==(const PauliTerm&) const = default;
};

/// Weighted sum of Pauli strings acting on `n_qubits` qubits, with the
/// electron sector the ground state is sought in.
struct PauliHamiltonian {
  int n_qubits = 0;
  int n_up = 0;
  int n_down = 0;
  std::vector<PauliTerm> terms;

  bool operator==(const PauliHamiltonian&) const = default;
};

/// Parses the line-oriented Hamiltonian format:
///
///     # comment
///     qubits <N> electrons <n_up> <n_down>
///     <coeff_re> <coeff_im> <opstring>
///     ...
///
/// Terms keep file order; a repeated op-string is merged into its first
/// occurrence by summing coefficients. Throws ParseError with the line number.
PauliHamiltonian parse_hamiltonian(std::string_view text);
PauliHamiltonian read_hamiltonian_file(const std::string& path);

/// Writes `h` in the format accepted by parse_hamiltonian, with coefficients
/// printed at round-trip precision.
void write_hamiltonian(std::ostream& os, const PauliHamiltonian& h);
std::string serialize_hamiltonian(const PauliHamiltonian& h);

/// Terms grouped by flip mask, with the Y phase fused into a real coefficient.
///
/// Group g couples |x> to |x ^ flip_masks[g]>. Its terms occupy
/// [offsets[g], offsets[g+1]) of `sign_masks` and `coefficients`.
struct CompressedHamiltonian {
  int n_qubits = 0;
  int n_up = 0;
  int n_down = 0;
  std::vector<BasisState> flip_masks;
  std::vector<std::size_t> offsets;
  std::vector<BasisState> sign_masks;
  std::vector<double> coefficients;

  std::size_t n_groups() const noexcept { return flip_masks.size(); }
  std::size_t n_terms() const noexcept { return coefficients.size(); }

  /// Summed amplitude of group g applied to x, restricted to the partner
  /// state x ^ flip_masks[g]. Equals <x'|sum_{i in g} c_i P_i|x>.
  double group_coefficient(const BasisState& x, std::size_t g) const noexcept {
    double a = 0.0;
    for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) {
      a += overlap_parity(x, sign_masks[i]) ? -coefficients[i] : coefficients[i];
    }
    return a;
  }

  std::pair<BasisState, double> group_amplitude(const BasisState& x, std::size_t g) const noexcept {
    return {x ^ flip_masks[g], group_coefficient(x, g)};
  }
};

/// Groups terms by flip mask, ascending by the mask's integer value.
///
/// Every term must be representable by a real fused coefficient: a term with
/// an odd number of Y factors and |Re c| > tol, or any term with |Im c| > tol,
/// is rejected with its index.
CompressedHamiltonian compress(const PauliHamiltonian& h, double tol = 1e-12);

/// Byte counts of the two in-memory Hamiltonian layouts compared by
/// `ham inspect`. Boolean tuples count one byte per qubit, integers and reals
/// eight bytes.
struct LayoutFootprint {
  std::size_t per_term_bytes = 0;    ///< XY tuple + YZ tuple + Y count + coefficient per term
  std::size_t grouped_bytes = 0;     ///< unique XY tuples + YZ tuples + fused coefficients + offsets
  std::size_t bitpacked_bytes = 0;   ///< this library's in-memory CompressedHamiltonian payload
  double reduction() const noexcept {
    return per_term_bytes ? 1.0 - static_cast<double>(grouped_bytes) / static_cast<double>(per_term_bytes)
                          : 0.0;
  }
};

LayoutFootprint layout_footprint(const CompressedHamiltonian& c);

/// Applies a single Pauli string to |x>: returns (x', phase) with
/// P|x> = phase |x'>. Uses X|b>=|1-b>, Y|0>=i|1>, Y|1>=-i|0>, Z|b>=(-1)^b|b>.
std::pair<BasisState, std::complex<double>> apply_pauli(std::span<const Pauli> ops,
                                                        const BasisState& x);

}  // namespace nnqs
