#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nnqs/ansatz.hpp"
#include "nnqs/pauli_hamiltonian.hpp"
#include "nnqs/sampler.hpp"

namespace nnqs {

/// Sorted ids with their complex amplitudes, searched by bisection.
struct WavefunctionLookup {
  std::vector<BasisState> ids;
  std::vector<double> values;  ///< re0, im0, re1, im1, ...

  std::size_t size() const noexcept { return ids.size(); }
  std::complex<double> value(std::size_t i) const noexcept { return {values[2 * i], values[2 * i + 1]}; }
  /// Index of `x`, if present.
  std::optional<std::size_t> index_of(const BasisState& x) const noexcept;
  std::optional<std::complex<double>> find(const BasisState& x) const noexcept;
};

/// Psi(x) = exp(log_amp) (cos phi + i sin phi) for each sample id.
WavefunctionLookup build_lookup(const SampleSet& s, std::span<const AmplitudePhase> amps);
WavefunctionLookup build_lookup(std::span<const BasisState> ids, std::span<const AmplitudePhase> amps);
/// Table from explicit amplitudes; `ids` must be strictly increasing.
WavefunctionLookup build_lookup(std::span<const BasisState> ids, std::span<const std::complex<double>> amps);

struct LocalEnergyCounters {
  std::uint64_t groups = 0;  ///< flip-mask groups visited
  std::uint64_t hits = 0;    ///< partner states found in the table
  std::uint64_t misses = 0;

  LocalEnergyCounters& operator+=(const LocalEnergyCounters& o) noexcept {
    groups += o.groups;
    hits += o.hits;
    misses += o.misses;
    return *this;
  }
};

/// E_loc for lut entries `chunk`, keeping only partners present in the table.
/// Work is split into fixed sub-chunks run on `n_threads` workers (0 = default).
std::vector<std::complex<double>> local_energy_sample_aware(const CompressedHamiltonian& c,
                                                            const WavefunctionLookup& lut,
                                                            std::span<const std::size_t> chunk,
                                                            LocalEnergyCounters* counters = nullptr,
                                                            int n_threads = 0);

/// Same over every entry of the table.
std::vector<std::complex<double>> local_energy_sample_aware(const CompressedHamiltonian& c,
                                                            const WavefunctionLookup& lut,
                                                            LocalEnergyCounters* counters = nullptr,
                                                            int n_threads = 0);

/// E_loc with every in-sector partner evaluated through `psi`. Partners
/// outside the sector have zero amplitude and are skipped.
std::vector<std::complex<double>> local_energy_exact(const CompressedHamiltonian& c, const Wavefunction& psi,
                                                     std::span<const BasisState> states, int n_threads = 0);

}  // namespace nnqs
