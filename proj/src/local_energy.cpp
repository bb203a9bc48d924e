#include "nnqs/local_energy.hpp"

#include <algorithm>
#include <cmath>

#include "nnqs/error.hpp"
#include "nnqs/parallel.hpp"

namespace nnqs {

namespace {

constexpr std::size_t kSubChunk = 64;

std::complex<double> divide(std::complex<double> num, std::complex<double> den) {
  const double norm = den.real() * den.real() + den.imag() * den.imag();
  return {(num.real() * den.real() + num.imag() * den.imag()) / norm,
          (num.imag() * den.real() - num.real() * den.imag()) / norm};
}

}  // namespace

std::optional<std::size_t> WavefunctionLookup::index_of(const BasisState& x) const noexcept {
  const auto it = std::lower_bound(ids.begin(), ids.end(), x);
  if (it == ids.end() || *it != x) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

std::optional<std::complex<double>> WavefunctionLookup::find(const BasisState& x) const noexcept {
  if (const auto i = index_of(x)) return value(*i);
  return std::nullopt;
}

WavefunctionLookup build_lookup(std::span<const BasisState> ids, std::span<const AmplitudePhase> amps) {
  if (ids.size() != amps.size()) {
    throw Error("build_lookup: " + std::to_string(ids.size()) + " ids but " + std::to_string(amps.size()) +
                " amplitudes");
  }
  std::vector<std::complex<double>> z(amps.size());
  for (std::size_t i = 0; i < amps.size(); ++i) z[i] = std::polar(std::exp(amps[i].log_amp), amps[i].phase);
  return build_lookup(ids, z);
}

WavefunctionLookup build_lookup(const SampleSet& s, std::span<const AmplitudePhase> amps) {
  return build_lookup(s.encoded_ids(), amps);
}

WavefunctionLookup build_lookup(std::span<const BasisState> ids, std::span<const std::complex<double>> amps) {
  if (ids.size() != amps.size()) {
    throw Error("build_lookup: " + std::to_string(ids.size()) + " ids but " + std::to_string(amps.size()) +
                " amplitudes");
  }
  WavefunctionLookup lut;
  lut.ids.assign(ids.begin(), ids.end());
  lut.values.resize(2 * amps.size());
  for (std::size_t i = 0; i < amps.size(); ++i) {
    if (i > 0 && !(ids[i - 1] < ids[i])) throw Error("build_lookup: ids must be strictly increasing");
    if (!std::isfinite(amps[i].real()) || !std::isfinite(amps[i].imag())) {
      throw NumericalError("build_lookup: non-finite amplitude for id " + to_hex(ids[i]));
    }
    lut.values[2 * i] = amps[i].real();
    lut.values[2 * i + 1] = amps[i].imag();
  }
  return lut;
}

std::vector<std::complex<double>> local_energy_sample_aware(const CompressedHamiltonian& c,
                                                            const WavefunctionLookup& lut,
                                                            std::span<const std::size_t> chunk,
                                                            LocalEnergyCounters* counters, int n_threads) {
  std::vector<std::complex<double>> out(chunk.size());
  const std::size_t n_sub = (chunk.size() + kSubChunk - 1) / kSubChunk;
  std::vector<LocalEnergyCounters> sub_counts(n_sub);
  parallel_for(
      n_sub,
      [&](std::size_t s) {
        LocalEnergyCounters& cnt = sub_counts[s];
        const std::size_t end = std::min(chunk.size(), (s + 1) * kSubChunk);
        for (std::size_t k = s * kSubChunk; k < end; ++k) {
          const std::size_t u = chunk[k];
          if (u >= lut.size()) throw Error("local_energy: sample index out of range");
          const BasisState& x = lut.ids[u];
          const std::complex<double> psi_x = lut.value(u);
          if (psi_x == 0.0) throw NumericalError("local_energy: zero amplitude for sample " + to_hex(x));
          std::complex<double> num = 0.0;
          for (std::size_t g = 0; g < c.n_groups(); ++g) {
            ++cnt.groups;
            const auto j = lut.index_of(x ^ c.flip_masks[g]);
            if (!j) {
              ++cnt.misses;
              continue;
            }
            ++cnt.hits;
            num += c.group_coefficient(x, g) * lut.value(*j);
          }
          out[k] = divide(num, psi_x);
        }
      },
      n_threads);
  if (counters) {
    for (const auto& s : sub_counts) *counters += s;
  }
  return out;
}

std::vector<std::complex<double>> local_energy_sample_aware(const CompressedHamiltonian& c,
                                                            const WavefunctionLookup& lut,
                                                            LocalEnergyCounters* counters, int n_threads) {
  std::vector<std::size_t> all(lut.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return local_energy_sample_aware(c, lut, all, counters, n_threads);
}

std::vector<std::complex<double>> local_energy_exact(const CompressedHamiltonian& c, const Wavefunction& psi,
                                                     std::span<const BasisState> states, int n_threads) {
  const int n = psi.n_qubits(), nu = psi.n_up(), nd = psi.n_down();
  std::vector<std::complex<double>> out(states.size());
  const std::size_t n_sub = (states.size() + kSubChunk - 1) / kSubChunk;
  parallel_for(
      n_sub,
      [&](std::size_t s) {
        const std::size_t begin = s * kSubChunk;
        const std::size_t end = std::min(states.size(), begin + kSubChunk);
        // Distinct partners of the whole sub-chunk, evaluated in one batch.
        std::vector<BasisState> partners;
        for (std::size_t k = begin; k < end; ++k) {
          if (!in_sector(states[k], n, nu, nd)) {
            throw Error("local_energy_exact: state " + to_bitstring(states[k], n) + " is outside the sector");
          }
          partners.push_back(states[k]);
          for (std::size_t g = 0; g < c.n_groups(); ++g) {
            const BasisState y = states[k] ^ c.flip_masks[g];
            if (in_sector(y, n, nu, nd)) partners.push_back(y);
          }
        }
        std::sort(partners.begin(), partners.end());
        partners.erase(std::unique(partners.begin(), partners.end()), partners.end());
        const auto amps = psi.log_amp_phase(partners);
        auto at = [&](const BasisState& y) -> const AmplitudePhase& {
          return amps[static_cast<std::size_t>(std::lower_bound(partners.begin(), partners.end(), y) -
                                               partners.begin())];
        };
        for (std::size_t k = begin; k < end; ++k) {
          const BasisState& x = states[k];
          const AmplitudePhase& ax = at(x);
          if (!std::isfinite(ax.log_amp)) {
            throw NumericalError("local_energy_exact: zero amplitude for state " + to_bitstring(x, n));
          }
          std::complex<double> e = 0.0;
          for (std::size_t g = 0; g < c.n_groups(); ++g) {
            const BasisState y = x ^ c.flip_masks[g];
            if (!in_sector(y, n, nu, nd)) continue;
            const AmplitudePhase& ay = at(y);
            if (!std::isfinite(ay.log_amp)) continue;
            e += c.group_coefficient(x, g) * std::polar(std::exp(ay.log_amp - ax.log_amp), ay.phase - ax.phase);
          }
          out[k] = e;
        }
      },
      n_threads);
  return out;
}

}  // namespace nnqs
