#pragma once

#include <array>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>

namespace nnqs {

inline constexpr int kMaxQubits = 128;

/// A computational basis state of up to 128 qubits. Qubit j is bit j of the
/// little-endian pair (words[0] holds qubits 0..63).
///
/// The same two words double as the integer encoding used for ordering and
/// lookup, so `operator<=>` is the id order.
struct BasisState {
  std::array<std::uint64_t, 2> words{0, 0};

  constexpr bool test(int j) const noexcept {
    return (words[static_cast<std::size_t>(j >> 6)] >> (j & 63)) & 1u;
  }
  constexpr void set(int j, bool value = true) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (j & 63);
    auto& w = words[static_cast<std::size_t>(j >> 6)];
    w = value ? (w | bit) : (w & ~bit);
  }
  constexpr void flip(int j) noexcept {
    words[static_cast<std::size_t>(j >> 6)] ^= std::uint64_t{1} << (j & 63);
  }

  constexpr int popcount() const noexcept {
    return std::popcount(words[0]) + std::popcount(words[1]);
  }

  constexpr BasisState operator^(const BasisState& o) const noexcept {
    return {{words[0] ^ o.words[0], words[1] ^ o.words[1]}};
  }
  constexpr BasisState operator&(const BasisState& o) const noexcept {
    return {{words[0] & o.words[0], words[1] & o.words[1]}};
  }
  constexpr BasisState operator|(const BasisState& o) const noexcept {
    return {{words[0] | o.words[0], words[1] | o.words[1]}};
  }

  // Ordering is by the 128-bit integer value (high word first).
  constexpr std::strong_ordering operator<=>(const BasisState& o) const noexcept {
    if (auto c = words[1] <=> o.words[1]; c != 0) return c;
    return words[0] <=> o.words[0];
  }
  constexpr bool operator==(const BasisState& o) const noexcept {
    return words[0] == o.words[0] && words[1] == o.words[1];
  }

  static constexpr BasisState from_uint(std::uint64_t v) noexcept { return {{v, 0}}; }
};

/// Parity of popcount(a & b), as 0 or 1.
constexpr int overlap_parity(const BasisState& a, const BasisState& b) noexcept {
  return (std::popcount(a.words[0] & b.words[0]) + std::popcount(a.words[1] & b.words[1])) & 1;
}

/// Mask with bits 0..n-1 set.
constexpr BasisState low_mask(int n) noexcept {
  BasisState m;
  for (int j = 0; j < n; ++j) m.set(j);
  return m;
}

/// Spin-up qubits are the even positions (2i), spin-down the odd ones (2i+1).
constexpr BasisState spin_mask(int n_qubits, int spin) noexcept {
  BasisState m;
  for (int j = spin; j < n_qubits; j += 2) m.set(j);
  return m;
}

/// Bitstring with qubit 0 as the leftmost character.
std::string to_bitstring(const BasisState& s, int n_qubits);

/// Hex encoding of the 128-bit id (high word first, zero padded).
std::string to_hex(const BasisState& s);

/// Number of bytes needed to pack `n_qubits` booleans.
constexpr std::size_t packed_bytes(int n_qubits) noexcept {
  return static_cast<std::size_t>((n_qubits + 7) / 8);
}

struct BasisStateHash {
  std::size_t operator()(const BasisState& s) const noexcept {
    std::uint64_t h = s.words[0] * 0x9E3779B97F4A7C15ull;
    h ^= s.words[1] + 0x7F4A7C15ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace nnqs
