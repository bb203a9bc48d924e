#include <doctest.h>

#include <random>
#include <set>

#include "nnqs/error.hpp"
#include "nnqs/pauli_hamiltonian.hpp"
#include "test_util.hpp"

using namespace nnqs;

namespace {

BasisState bits(std::initializer_list<int> set) {
  BasisState s;
  for (int j : set) s.set(j);
  return s;
}

PauliHamiltonian two_qubit_example(double c1, double c2, double c3, double c4) {
  return parse_hamiltonian("qubits 2 electrons 1 0\n" + std::to_string(c1) + " 0 ZI\n" + std::to_string(c2) +
                           " 0 IZ\n" + std::to_string(c3) + " 0 XX\n" + std::to_string(c4) + " 0 YY\n");
}

}  // namespace

TEST_SUITE("pauli-ham") {
  TEST_CASE("identity term from header and one line") {
    const auto h = parse_hamiltonian("qubits 4 electrons 1 1\n-0.8 0.0 IIII\n");
    CHECK(h.n_qubits == 4);
    CHECK(h.n_up == 1);
    CHECK(h.n_down == 1);
    REQUIRE(h.terms.size() == 1);
    CHECK(h.terms[0].coefficient == std::complex<double>(-0.8, 0.0));
    CHECK(h.terms[0].op_string() == "IIII");
  }

  TEST_CASE("leftmost character is qubit 0") {
    const auto h = parse_hamiltonian("qubits 4 electrons 1 1\n0.25 0.0 XZXI\n");
    const auto& ops = h.terms[0].ops;
    CHECK(ops[0] == Pauli::X);
    CHECK(ops[1] == Pauli::Z);
    CHECK(ops[2] == Pauli::X);
    CHECK(ops[3] == Pauli::I);
    CHECK(h.terms[0].flip_mask() == bits({0, 2}));
    CHECK(h.terms[0].sign_mask() == bits({1}));
  }

  TEST_CASE("bad Pauli character names line and character") {
    try {
      parse_hamiltonian("# c\nqubits 4 electrons 1 1\n0.1 0.0 XQII\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      const std::string msg = e.what();
      CHECK(msg.find("line 3") != std::string::npos);
      CHECK(msg.find("'Q'") != std::string::npos);
    }
  }

  TEST_CASE("grammar violations") {
    CHECK_THROWS_AS(parse_hamiltonian("0.1 0.0 XI\n"), ParseError);
    CHECK_THROWS_AS(parse_hamiltonian("qubits 2 electrons 1 0\n0.1x 0.0 XI\n"), ParseError);
    CHECK_THROWS_AS(parse_hamiltonian("qubits 2 electrons 1 0\n0.1 0.0 XII\n"), ParseError);
    CHECK_THROWS_AS(parse_hamiltonian("qubits 2 electrons 1 0\n0.1 0.0\n"), ParseError);
    CHECK_THROWS_AS(parse_hamiltonian("qubits 2 electrons 2 1\n0.1 0.0 XI\n"), ParseError);
    CHECK_THROWS_AS(parse_hamiltonian("qubits 2 electrons 1 0\n"), ParseError);
    CHECK_THROWS_AS(parse_hamiltonian("qubits 0 electrons 0 0\n1 0 \n"), ParseError);
    CHECK_THROWS_AS(parse_hamiltonian("qubits 2 electrons 1 0\nnan 0.0 XI\n"), ParseError);
  }

  TEST_CASE("duplicate op-strings merge into the first occurrence") {
    const auto h = parse_hamiltonian("qubits 2 electrons 1 0\n0.5 0 ZI\n1.0 0 XX\n0.25 0 ZI\n");
    REQUIRE(h.terms.size() == 2);
    CHECK(h.terms[0].op_string() == "ZI");
    CHECK(h.terms[0].coefficient.real() == 0.75);
    CHECK(h.terms[1].op_string() == "XX");
  }

  TEST_CASE("parse, serialize, parse is the identity") {
    std::mt19937_64 rng(11);
    for (int n = 2; n <= 6; ++n) {
      auto h = testutil::random_hamiltonian(n, 6, rng);
      h.n_up = n / 2;
      h.n_down = 0;
      h.terms[0].coefficient = {1.0 / 3.0, -2.0e-17};
      const auto again = parse_hamiltonian(serialize_hamiltonian(h));
      CHECK(again == h);
      CHECK(parse_hamiltonian(serialize_hamiltonian(again)) == again);
    }
  }

  TEST_CASE("compress groups by flip mask with the Y phase fused") {
    const auto c = compress(two_qubit_example(0.1, 0.2, 0.3, 0.4));
    REQUIRE(c.n_groups() == 2);
    CHECK(c.flip_masks[0] == BasisState{});
    CHECK(c.flip_masks[1] == bits({0, 1}));
    CHECK(c.offsets == std::vector<std::size_t>{0, 2, 4});
    CHECK(c.coefficients[0] == 0.1);
    CHECK(c.coefficients[1] == 0.2);
    CHECK(c.coefficients[2] == 0.3);
    CHECK(c.coefficients[3] == -0.4);
  }

  TEST_CASE("identity-only Hamiltonian") {
    const auto c = compress(parse_hamiltonian("qubits 3 electrons 1 1\n-1.5 0 III\n"));
    CHECK(c.n_groups() == 1);
    CHECK(c.offsets == std::vector<std::size_t>{0, 1});
    CHECK(c.coefficients[0] == -1.5);
  }

  TEST_CASE("odd Y count with a real part is rejected with its index") {
    const auto h = parse_hamiltonian("qubits 2 electrons 1 0\n1 0 ZZ\n0.5 0 XY\n");
    try {
      compress(h);
      FAIL("expected rejection");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("term 1") != std::string::npos);
    }
    const auto tiny = parse_hamiltonian("qubits 2 electrons 1 0\n1 0 ZZ\n1e-14 0 XY\n");
    CHECK_NOTHROW(compress(tiny));
  }

  TEST_CASE("group_amplitude examples") {
    const double c = 0.7;
    SUBCASE("Z0 on a set bit") {
      const auto ch = compress(parse_hamiltonian("qubits 1 electrons 1 0\n0.7 0 Z\n"));
      const auto [xp, a] = ch.group_amplitude(bits({0}), 0);
      CHECK(xp == bits({0}));
      CHECK(a == -c);
    }
    SUBCASE("Y0Y1 on |00>") {
      const auto ch = compress(parse_hamiltonian("qubits 2 electrons 1 0\n0.7 0 YY\n"));
      const auto [xp, a] = ch.group_amplitude(BasisState{}, 0);
      CHECK(xp == bits({0, 1}));
      CHECK(a == -c);
    }
    SUBCASE("Z0 + Z1 on bit0=1, bit1=0") {
      const auto ch = compress(parse_hamiltonian("qubits 2 electrons 1 0\n0.3 0 ZI\n0.5 0 IZ\n"));
      const auto [xp, a] = ch.group_amplitude(bits({0}), 0);
      CHECK(xp == bits({0}));
      CHECK(a == doctest::Approx(-0.3 + 0.5).epsilon(1e-15));
    }
  }

  TEST_CASE("apply_pauli agrees with the 2x2 matrices") {
    std::mt19937_64 rng(3);
    for (int n = 2; n <= 5; ++n) {
      const auto h = testutil::random_hamiltonian(n, 8, rng);
      for (const auto& t : h.terms) {
        for (std::uint64_t x = 0; x < (1u << n); ++x) {
          const auto [y, ph] = apply_pauli(t.ops, BasisState::from_uint(x));
          CHECK(testutil::pauli_element(t.ops, y.words[0], x) == ph);
        }
      }
    }
  }

  TEST_CASE("dense reconstruction from groups is exact") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
      const int n = 1 + trial % 6;
      const int max_terms = std::min(20, (1 << (2 * n)) / 2);
      auto h = testutil::random_hamiltonian(n, 1 + trial % max_terms, rng);
      const Eigen::MatrixXcd ref = testutil::dense_matrix(h);
      const auto c = compress(h);
      const auto dim = static_cast<Eigen::Index>(1) << n;
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
      for (std::uint64_t x = 0; x < static_cast<std::uint64_t>(dim); ++x) {
        for (std::size_t g = 0; g < c.n_groups(); ++g) {
          const auto [y, a] = c.group_amplitude(BasisState::from_uint(x), g);
          m(static_cast<Eigen::Index>(y.words[0]), static_cast<Eigen::Index>(x)) += a;
        }
      }
      CHECK(ref.imag().cwiseAbs().maxCoeff() == 0.0);
      // Term order differs between the two sums, so allow last-bit rounding.
      CHECK((m - ref.real()).cwiseAbs().maxCoeff() <= 1e-15 * (1 + ref.cwiseAbs().maxCoeff()));
    }
  }

  TEST_CASE("single-term reconstruction has no rounding at all") {
    std::mt19937_64 rng(5);
    for (int n = 1; n <= 6; ++n) {
      for (int rep = 0; rep < 10; ++rep) {
        const auto h = testutil::random_hamiltonian(n, 1, rng);
        const Eigen::MatrixXcd ref = testutil::dense_matrix(h);
        const auto c = compress(h);
        for (std::uint64_t x = 0; x < (1u << n); ++x) {
          const auto [y, a] = c.group_amplitude(BasisState::from_uint(x), 0);
          CHECK(a == ref(static_cast<Eigen::Index>(y.words[0]), static_cast<Eigen::Index>(x)).real());
        }
      }
    }
  }

  TEST_CASE("fixture with N <= 6 assembles to a real symmetric matrix") {
    const auto h = read_hamiltonian_file(testutil::data_path("h2_sto3g.ham"));
    REQUIRE(h.n_qubits <= 6);
    const auto c = compress(h);
    const auto dim = static_cast<Eigen::Index>(1) << h.n_qubits;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    for (std::uint64_t x = 0; x < static_cast<std::uint64_t>(dim); ++x) {
      for (std::size_t g = 0; g < c.n_groups(); ++g) {
        const auto [y, a] = c.group_amplitude(BasisState::from_uint(x), g);
        m(static_cast<Eigen::Index>(y.words[0]), static_cast<Eigen::Index>(x)) += a;
      }
    }
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("compressed structure invariants on every fixture") {
    for (const char* name : {"h2_sto3g.ham", "lih_sto3g.ham", "h2o_sto3g.ham", "beh2_sto3g_r1.00.ham",
                             "n2_sto3g.ham", "ph3_sto3g.ham", "licl_sto3g.ham"}) {
      CAPTURE(name);
      const auto h = read_hamiltonian_file(testutil::data_path(name));
      const auto c = compress(h);
      CHECK(c.n_terms() == h.terms.size());
      CHECK(c.offsets.front() == 0);
      CHECK(c.offsets.back() == h.terms.size());
      std::size_t total = 0;
      for (std::size_t g = 0; g < c.n_groups(); ++g) {
        CHECK(c.offsets[g] < c.offsets[g + 1]);
        total += c.offsets[g + 1] - c.offsets[g];
        if (g > 0) CHECK(c.flip_masks[g - 1] < c.flip_masks[g]);
      }
      CHECK(total == h.terms.size());
      // Each stored sign mask belongs to a term with the group's flip mask.
      std::multiset<std::pair<BasisState, BasisState>> from_terms, from_groups;
      for (const auto& t : h.terms) from_terms.insert({t.flip_mask(), t.sign_mask()});
      for (std::size_t g = 0; g < c.n_groups(); ++g) {
        for (std::size_t i = c.offsets[g]; i < c.offsets[g + 1]; ++i) from_groups.insert({c.flip_masks[g], c.sign_masks[i]});
      }
      CHECK(from_terms == from_groups);
    }
  }

  TEST_CASE("H2O fixture size and layout reduction") {
    const auto h = read_hamiltonian_file(testutil::data_path("h2o_sto3g.ham"));
    CHECK(h.n_qubits == 14);
    // The published count is 1390; this geometry and drop threshold give 2110.
    CHECK(h.terms.size() == 2110);
    const auto f = layout_footprint(compress(h));
    CHECK(f.reduction() >= 0.40);
  }

  TEST_CASE("layout byte counts follow the declared formulas") {
    const auto c = compress(two_qubit_example(0.1, 0.2, 0.3, 0.4));
    const auto f = layout_footprint(c);
    CHECK(f.per_term_bytes == 4 * (2 * 2 + 16));
    CHECK(f.grouped_bytes == 2 * 2 + 4 * 2 + 4 * 8 + 3 * 8);
    const auto one = layout_footprint(compress(parse_hamiltonian("qubits 4 electrons 1 1\n-1 0 IIII\n")));
    CHECK(one.per_term_bytes == 24);
    CHECK(one.grouped_bytes == 4 + 4 + 8 + 16);
  }

  TEST_CASE("complex coefficient is rejected by compress") {
    const auto h = parse_hamiltonian("qubits 2 electrons 1 0\n1 0.5 ZZ\n");
    CHECK_THROWS_AS(compress(h), Error);
  }

  TEST_CASE("states beyond 64 qubits use the high word") {
    std::string ops(100, 'I');
    ops[70] = 'X';
    ops[99] = 'Z';
    const auto h = parse_hamiltonian("qubits 100 electrons 1 1\n0.5 0 " + ops + "\n");
    const auto c = compress(h);
    BasisState x;
    x.set(99);
    const auto [y, a] = c.group_amplitude(x, 0);
    CHECK(y.test(70));
    CHECK(y.test(99));
    CHECK(a == -0.5);
    CHECK(y.words[0] == 0);
  }
}
