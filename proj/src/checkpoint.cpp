#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "nnqs/ansatz.hpp"
#include "nnqs/error.hpp"

namespace nnqs {

namespace {

constexpr std::array<char, 8> kMagic = {'N', 'N', 'Q', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 8);
}
void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 4);
}
void put_i32(std::ostream& os, int v) { put_u32(os, static_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw Error("checkpoint: unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}
std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw Error("checkpoint: unexpected end of file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}
int get_i32(std::istream& is) { return static_cast<int>(get_u32(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

void put_vec(std::ostream& os, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v[i]);
}
Eigen::VectorXd get_vec(std::istream& is, std::uint64_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get_f64(is);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  const auto& c = ck.config;
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kVersion);
  put_i32(os, c.n_qubits);
  put_i32(os, c.n_up);
  put_i32(os, c.n_down);
  put_i32(os, c.d_model);
  put_i32(os, c.n_heads);
  put_i32(os, c.n_decoders);
  put_u32(os, static_cast<std::uint32_t>(c.mlp_widths.size()));
  for (int w : c.mlp_widths) put_i32(os, w);
  put_u64(os, c.seed);
  put_u64(os, ck.iteration);
  put_u64(os, static_cast<std::uint64_t>(ck.params.size()));
  const bool has_opt = ck.adam_m.size() > 0;
  if (has_opt && (ck.adam_m.size() != ck.params.size() || ck.adam_v.size() != ck.params.size())) {
    throw Error("checkpoint: optimizer moments must match the parameter length");
  }
  os.put(has_opt ? 1 : 0);
  put_vec(os, ck.params);
  if (has_opt) {
    put_u64(os, ck.adam_step);
    put_vec(os, ck.adam_m);
    put_vec(os, ck.adam_v);
  }
  if (!os) throw Error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw Error("checkpoint: bad magic");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  auto& c = ck.config;
  c.n_qubits = get_i32(is);
  c.n_up = get_i32(is);
  c.n_down = get_i32(is);
  c.d_model = get_i32(is);
  c.n_heads = get_i32(is);
  c.n_decoders = get_i32(is);
  const std::uint32_t n_mlp = get_u32(is);
  if (n_mlp > 1024) throw Error("checkpoint: implausible MLP depth");
  c.mlp_widths.resize(n_mlp);
  for (auto& w : c.mlp_widths) w = get_i32(is);
  c.seed = get_u64(is);
  ck.iteration = get_u64(is);
  const std::uint64_t m = get_u64(is);
  const ParameterLayout layout(c);
  if (m != static_cast<std::uint64_t>(layout.size())) {
    throw Error("checkpoint: parameter count " + std::to_string(m) + " does not match the echoed config (" +
                std::to_string(layout.size()) + ")");
  }
  const int has_opt = is.get();
  if (has_opt != 0 && has_opt != 1) throw Error("checkpoint: corrupt optimizer flag");
  ck.params = get_vec(is, m);
  if (has_opt == 1) {
    ck.adam_step = get_u64(is);
    ck.adam_m = get_vec(is, m);
    ck.adam_v = get_vec(is, m);
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint '" + tmp + "'");
    write_checkpoint(os, ck);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(is);
}

std::string params_hash(const Eigen::VectorXd& params) {
  std::ostringstream bytes;
  put_vec(bytes, params);
  const std::string data = bytes.str();
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream hex;
  hex << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) hex << std::setw(2) << static_cast<int>(md[i]);
  return hex.str();
}

}  // namespace nnqs
