#include "nnqs/pauli_hamiltonian.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "nnqs/error.hpp"

namespace nnqs {

std::string to_bitstring(const BasisState& s, int n_qubits) {
  std::string out(static_cast<std::size_t>(n_qubits), '0');
  for (int j = 0; j < n_qubits; ++j) {
    if (s.test(j)) out[static_cast<std::size_t>(j)] = '1';
  }
  return out;
}

std::string to_hex(const BasisState& s) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << s.words[1] << std::setw(16) << s.words[0];
  return os.str();
}

int PauliTerm::y_count() const noexcept {
  return static_cast<int>(std::count(ops.begin(), ops.end(), Pauli::Y));
}

BasisState PauliTerm::flip_mask() const noexcept {
  BasisState m;
  for (std::size_t j = 0; j < ops.size(); ++j) {
    if (ops[j] == Pauli::X || ops[j] == Pauli::Y) m.set(static_cast<int>(j));
  }
  return m;
}

BasisState PauliTerm::sign_mask() const noexcept {
  BasisState m;
  for (std::size_t j = 0; j < ops.size(); ++j) {
    if (ops[j] == Pauli::Y || ops[j] == Pauli::Z) m.set(static_cast<int>(j));
  }
  return m;
}

std::string PauliTerm::op_string() const {
  static constexpr char kChars[] = {'I', 'X', 'Y', 'Z'};
  std::string s;
  s.reserve(ops.size());
  for (Pauli p : ops) s.push_back(kChars[static_cast<int>(p)]);
  return s;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_real(std::string_view tok, std::size_t line, const char* what) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError(line, std::string("malformed ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

int parse_count(std::string_view tok, std::size_t line, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || v < 0) {
    throw ParseError(line, std::string("malformed ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

PauliHamiltonian parse_hamiltonian(std::string_view text) {
  PauliHamiltonian h;
  bool have_header = false;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    if (!have_header) {
      if (toks.size() != 5 || toks[0] != "qubits" || toks[2] != "electrons") {
        throw ParseError(line_no, "missing header 'qubits <N> electrons <n_up> <n_down>'");
      }
      h.n_qubits = parse_count(toks[1], line_no, "qubit count");
      h.n_up = parse_count(toks[3], line_no, "electron count");
      h.n_down = parse_count(toks[4], line_no, "electron count");
      if (h.n_qubits < 1 || h.n_qubits > kMaxQubits) {
        throw ParseError(line_no, "qubit count must be in [1, " + std::to_string(kMaxQubits) + "]");
      }
      if (h.n_up + h.n_down > h.n_qubits) {
        throw ParseError(line_no, "more electrons than qubits");
      }
      have_header = true;
    } else {
      if (toks.size() != 3) {
        throw ParseError(line_no, "expected '<coeff_re> <coeff_im> <opstring>'");
      }
      PauliTerm term;
      term.coefficient = {parse_real(toks[0], line_no, "coefficient"),
                          parse_real(toks[1], line_no, "coefficient")};
      std::string_view ops = toks[2];
      term.ops.reserve(ops.size());
      for (std::size_t j = 0; j < ops.size(); ++j) {
        switch (ops[j]) {
          case 'I': term.ops.push_back(Pauli::I); break;
          case 'X': term.ops.push_back(Pauli::X); break;
          case 'Y': term.ops.push_back(Pauli::Y); break;
          case 'Z': term.ops.push_back(Pauli::Z); break;
          default:
            throw ParseError(line_no, "invalid Pauli character '" + std::string(1, ops[j]) +
                                          "' at position " + std::to_string(j));
        }
      }
      if (static_cast<int>(term.ops.size()) != h.n_qubits) {
        throw ParseError(line_no, "op-string length " + std::to_string(term.ops.size()) +
                                      " does not match qubit count " + std::to_string(h.n_qubits));
      }
      auto [it, inserted] = seen.emplace(std::string(ops), h.terms.size());
      if (inserted) {
        h.terms.push_back(std::move(term));
      } else {
        h.terms[it->second].coefficient += term.coefficient;
      }
    }
  }
  if (!have_header) throw ParseError(0, "missing header 'qubits <N> electrons <n_up> <n_down>'");
  if (h.terms.empty()) throw ParseError(line_no, "Hamiltonian has no terms");
  return h;
}

PauliHamiltonian read_hamiltonian_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open Hamiltonian file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_hamiltonian(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path, e);
  }
}

void write_hamiltonian(std::ostream& os, const PauliHamiltonian& h) {
  os << "qubits " << h.n_qubits << " electrons " << h.n_up << ' ' << h.n_down << '\n';
  std::array<char, 64> buf{};
  auto put = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    os.write(buf.data(), ptr - buf.data());
  };
  for (const auto& t : h.terms) {
    put(t.coefficient.real());
    os << ' ';
    put(t.coefficient.imag());
    os << ' ' << t.op_string() << '\n';
  }
}

std::string serialize_hamiltonian(const PauliHamiltonian& h) {
  std::ostringstream os;
  write_hamiltonian(os, h);
  return os.str();
}

CompressedHamiltonian compress(const PauliHamiltonian& h, double tol) {
  // Ordered map gives ascending flip-mask order.
  std::map<BasisState, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < h.terms.size(); ++i) {
    const auto& t = h.terms[i];
    const int ny = t.y_count();
    if (std::abs(t.coefficient.imag()) > tol) {
      throw Error("term " + std::to_string(i) + " (" + t.op_string() +
                  ") has an imaginary coefficient; only real Hamiltonians are supported");
    }
    if (ny % 2 == 1 && std::abs(t.coefficient.real()) > tol) {
      throw Error("term " + std::to_string(i) + " (" + t.op_string() +
                  ") has an odd number of Y operators and a nonzero real coefficient");
    }
    groups[t.flip_mask()].push_back(i);
  }

  CompressedHamiltonian c;
  c.n_qubits = h.n_qubits;
  c.n_up = h.n_up;
  c.n_down = h.n_down;
  c.flip_masks.reserve(groups.size());
  c.offsets.reserve(groups.size() + 1);
  c.sign_masks.reserve(h.terms.size());
  c.coefficients.reserve(h.terms.size());
  c.offsets.push_back(0);
  for (const auto& [mask, members] : groups) {
    c.flip_masks.push_back(mask);
    for (std::size_t i : members) {
      const auto& t = h.terms[i];
      const int ny = t.y_count();
      // Re((-i)^ny): 1, 0, -1, 0 for ny mod 4 = 0, 1, 2, 3.
      static constexpr double kPhase[] = {1.0, 0.0, -1.0, 0.0};
      c.sign_masks.push_back(t.sign_mask());
      c.coefficients.push_back(t.coefficient.real() * kPhase[ny % 4]);
    }
    c.offsets.push_back(c.coefficients.size());
  }
  return c;
}

LayoutFootprint layout_footprint(const CompressedHamiltonian& c) {
  const std::size_t n = static_cast<std::size_t>(c.n_qubits);
  const std::size_t nh = c.n_terms();
  const std::size_t k = c.n_groups();
  LayoutFootprint f;
  f.per_term_bytes = nh * (2 * n + 8 + 8);
  f.grouped_bytes = k * n + nh * n + nh * 8 + (k + 1) * 8;
  f.bitpacked_bytes = (k + nh) * sizeof(BasisState) + nh * sizeof(double) + (k + 1) * sizeof(std::size_t);
  return f;
}

std::pair<BasisState, std::complex<double>> apply_pauli(std::span<const Pauli> ops,
                                                        const BasisState& x) {
  BasisState out = x;
  std::complex<double> phase{1.0, 0.0};
  const std::complex<double> i_unit{0.0, 1.0};
  for (std::size_t j = 0; j < ops.size(); ++j) {
    const int q = static_cast<int>(j);
    const bool b = x.test(q);
    switch (ops[j]) {
      case Pauli::I: break;
      case Pauli::X: out.flip(q); break;
      case Pauli::Y:
        out.flip(q);
        phase *= b ? -i_unit : i_unit;
        break;
      case Pauli::Z:
        if (b) phase = -phase;
        break;
    }
  }
  return {out, phase};
}

}  // namespace nnqs
