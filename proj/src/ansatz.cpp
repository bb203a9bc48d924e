#include "nnqs/ansatz.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nnqs/error.hpp"
#include "nnqs/nn_kernels.hpp"
#include "nnqs/parallel.hpp"

namespace nnqs {

using Eigen::Index;
using MatrixXd = Eigen::MatrixXd;
using Logits = Eigen::Matrix<double, 1, kTokenCount>;

namespace {

// Sequences per work item; fixed so reductions do not depend on thread count.
constexpr std::size_t kChunk = 64;

}  // namespace

// ---------------------------------------------------------------------------
// Configuration and layout

void AnsatzConfig::validate() const {
  if (n_qubits < 2 || n_qubits % 2 != 0 || n_qubits > kMaxQubits) {
    throw Error("ansatz: n_qubits must be even and in [2, " + std::to_string(kMaxQubits) + "]");
  }
  if (n_up < 0 || n_down < 0 || n_up > n_orbitals() || n_down > n_orbitals()) {
    throw Error("ansatz: electron counts must lie in [0, n_qubits/2]");
  }
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw Error("ansatz: d_model must be a positive multiple of n_heads");
  }
  if (n_decoders < 1) throw Error("ansatz: n_decoders must be positive");
  if (mlp_widths.empty()) throw Error("ansatz: mlp_widths must be non-empty");
  for (int w : mlp_widths) {
    if (w < 1) throw Error("ansatz: mlp widths must be positive");
  }
}

std::size_t ParameterLayout::add(std::string name, Index rows, Index cols, ParameterBlock::Kind kind) {
  blocks_.push_back({std::move(name), rows, cols, size_, kind});
  size_ += rows * cols;
  return blocks_.size() - 1;
}

ParameterLayout::ParameterLayout(const AnsatzConfig& cfg) {
  cfg.validate();
  using K = ParameterBlock::Kind;
  const Index d = cfg.d_model;
  add("embed", kTokenCount + 1, d, K::Weight);
  for (int l = 0; l < cfg.n_decoders; ++l) {
    const std::string p = "decoder" + std::to_string(l) + ".";
    add(p + "ln1.gain", 1, d, K::Gain);
    add(p + "ln1.bias", 1, d, K::Bias);
    for (const char* w : {"q", "k", "v", "o"}) {
      add(p + "attn.w" + w, d, d, K::Weight);
      add(p + "attn.b" + w, 1, d, K::Bias);
    }
    add(p + "ln2.gain", 1, d, K::Gain);
    add(p + "ln2.bias", 1, d, K::Bias);
    add(p + "ffn.w1", d, 4 * d, K::Weight);
    add(p + "ffn.b1", 1, 4 * d, K::Bias);
    add(p + "ffn.w2", 4 * d, d, K::Weight);
    add(p + "ffn.b2", 1, d, K::Bias);
  }
  add("final_ln.gain", 1, d, K::Gain);
  add("final_ln.bias", 1, d, K::Bias);
  add("head.w", d, kTokenCount, K::Weight);
  add("head.b", 1, kTokenCount, K::Bias);
  Index fan_in = cfg.n_qubits;
  for (std::size_t i = 0; i < cfg.mlp_widths.size(); ++i) {
    const std::string p = "phase.layer" + std::to_string(i) + ".";
    add(p + "w", fan_in, cfg.mlp_widths[i], K::Weight);
    add(p + "b", 1, cfg.mlp_widths[i], K::Bias);
    fan_in = cfg.mlp_widths[i];
  }
  add("phase.out.w", fan_in, 1, K::Weight);
  add("phase.out.b", 1, 1, K::Bias);
}

const ParameterBlock& ParameterLayout::block_at(Index i) const {
  auto it = std::upper_bound(blocks_.begin(), blocks_.end(), i,
                             [](Index v, const ParameterBlock& b) { return v < b.offset; });
  if (it == blocks_.begin() || i >= size_) throw Error("parameter index out of range");
  return *std::prev(it);
}

const ParameterBlock& ParameterLayout::find(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error("no parameter block named '" + name + "'");
}

Eigen::VectorXd init_params(const AnsatzConfig& cfg) {
  ParameterLayout layout(cfg);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(layout.size());
  std::mt19937_64 rng(cfg.seed);
  for (const auto& b : layout.blocks()) {
    switch (b.kind) {
      case ParameterBlock::Kind::Weight: {
        const double bound = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Index i = 0; i < b.size(); ++i) p[b.offset + i] = dist(rng);
        break;
      }
      case ParameterBlock::Kind::Gain:
        p.segment(b.offset, b.size()).setOnes();
        break;
      case ParameterBlock::Kind::Bias:
        break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Tokens and sector bookkeeping

std::vector<int> state_tokens(const BasisState& x, int n_orbitals) {
  std::vector<int> tokens(static_cast<std::size_t>(n_orbitals));
  for (int t = 0; t < n_orbitals; ++t) {
    const int o = n_orbitals - 1 - t;
    tokens[static_cast<std::size_t>(t)] = static_cast<int>(x.test(2 * o)) | (static_cast<int>(x.test(2 * o + 1)) << 1);
  }
  return tokens;
}

BasisState tokens_state(std::span<const int> tokens, int n_orbitals) {
  BasisState x;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int o = n_orbitals - 1 - static_cast<int>(t);
    if (tokens[t] & 1) x.set(2 * o);
    if (tokens[t] & 2) x.set(2 * o + 1);
  }
  return x;
}

bool in_sector(const BasisState& x, int n_qubits, int n_up, int n_down) noexcept {
  if ((x & low_mask(n_qubits)) != x) return false;
  return (x & spin_mask(n_qubits, 0)).popcount() == n_up && (x & spin_mask(n_qubits, 1)).popcount() == n_down;
}

std::array<bool, kTokenCount> feasible_tokens(int step, int up_so_far, int down_so_far, int n_orbitals,
                                              int n_up, int n_down) noexcept {
  const int remaining = n_orbitals - step - 1;
  std::array<bool, kTokenCount> ok{};
  for (int tok = 0; tok < kTokenCount; ++tok) {
    const int up = up_so_far + (tok & 1);
    const int down = down_so_far + ((tok >> 1) & 1);
    ok[static_cast<std::size_t>(tok)] = up <= n_up && down <= n_down && n_up - up <= remaining &&
                                        n_down - down <= remaining;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// Network views over a flat buffer

namespace {

template <class Scalar>
struct Views {
  using W = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const MatrixXd, MatrixXd>>;
  using B = Eigen::Map<std::conditional_t<std::is_const_v<Scalar>, const Eigen::RowVectorXd, Eigen::RowVectorXd>>;

  struct Decoder {
    B ln1_g, ln1_b;
    W wq; B bq;
    W wk; B bk;
    W wv; B bv;
    W wo; B bo;
    B ln2_g, ln2_b;
    W w1; B b1;
    W w2; B b2;
  };
  struct Dense {
    W w;
    B b;
  };

  // Blocks are consumed in layout order; keep `cursor` declared first.
  const ParameterLayout* layout;
  Scalar* base;
  std::size_t cursor = 0;

  W embed;
  std::vector<Decoder> decoders;
  B final_g, final_b;
  W head_w;
  B head_b;
  std::vector<Dense> phase;  // hidden layers followed by the output layer

  Views(const ParameterLayout& l, const AnsatzConfig& cfg, Scalar* b)
      : layout(&l),
        base(b),
        embed(next_w()),
        decoders(make_decoders(cfg.n_decoders)),
        final_g(next_b()),
        final_b(next_b()),
        head_w(next_w()),
        head_b(next_b()),
        phase(make_phase(cfg.mlp_widths.size() + 1)) {}

  W next_w() {
    const auto& blk = layout->block(cursor++);
    return W(base + blk.offset, blk.rows, blk.cols);
  }
  B next_b() {
    const auto& blk = layout->block(cursor++);
    return B(base + blk.offset, blk.cols);
  }
  std::vector<Decoder> make_decoders(int n) {
    std::vector<Decoder> out;
    for (int l = 0; l < n; ++l) {
      // Braced initialization evaluates left to right.
      out.push_back(Decoder{next_b(), next_b(), next_w(), next_b(), next_w(), next_b(), next_w(), next_b(),
                            next_w(), next_b(), next_b(), next_b(), next_w(), next_b(), next_w(), next_b()});
    }
    return out;
  }
  std::vector<Dense> make_phase(std::size_t n) {
    std::vector<Dense> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(Dense{next_w(), next_b()});
    return out;
  }
};

using ParamViews = Views<const double>;
using GradViews = Views<double>;

struct DecoderCache {
  MatrixXd x_in;
  nn::LayerNormCache<double> ln1;
  MatrixXd a, q, k, v;
  std::vector<MatrixXd> probs;  // index seq * n_heads + head
  MatrixXd attn;
  MatrixXd x_mid;
  nn::LayerNormCache<double> ln2;
  MatrixXd b, h_pre, h_act;
};

struct AmplitudeCache {
  std::vector<DecoderCache> layers;
  nn::LayerNormCache<double> final_ln;
  MatrixXd f;
};

struct PhaseCache {
  std::vector<MatrixXd> inputs;  // input to each dense layer
};

/// Causal decoder stack over `n_seq` sequences of `len` tokens each, stored
/// row-major in `tokens`. Returns (n_seq*len) x 4 logits; row s*len+t holds the
/// logits for the token following position t of sequence s.
MatrixXd amplitude_forward(const ParamViews& pv, const AnsatzConfig& cfg, std::span<const int> tokens,
                           Index n_seq, Index len, AmplitudeCache& cache) {
  const Index d = cfg.d_model;
  const Index rows = n_seq * len;
  const int n_heads = cfg.n_heads;
  const Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  static thread_local MatrixXd pe;
  if (pe.rows() < len || pe.cols() != d) pe = nn::sinusoidal_positions<double>(static_cast<int>(std::max<Index>(len, 64)), static_cast<int>(d));

  MatrixXd x(rows, d);
  for (Index r = 0; r < rows; ++r) {
    x.row(r) = pv.embed.row(tokens[static_cast<std::size_t>(r)]) + pe.row(r % len);
  }

  cache.layers.resize(static_cast<std::size_t>(cfg.n_decoders));
  for (int l = 0; l < cfg.n_decoders; ++l) {
    const auto& w = pv.decoders[static_cast<std::size_t>(l)];
    auto& c = cache.layers[static_cast<std::size_t>(l)];
    c.x_in = std::move(x);
    c.a = nn::layer_norm(c.x_in, w.ln1_g, w.ln1_b, c.ln1);
    c.q = nn::affine(c.a, w.wq, w.bq);
    c.k = nn::affine(c.a, w.wk, w.bk);
    c.v = nn::affine(c.a, w.wv, w.bv);
    c.attn.resize(rows, d);
    c.probs.resize(static_cast<std::size_t>(n_seq * n_heads));
    for (Index s = 0; s < n_seq; ++s) {
      for (int h = 0; h < n_heads; ++h) {
        auto qh = c.q.block(s * len, h * dh, len, dh);
        auto kh = c.k.block(s * len, h * dh, len, dh);
        auto vh = c.v.block(s * len, h * dh, len, dh);
        MatrixXd& p = c.probs[static_cast<std::size_t>(s * n_heads + h)];
        p.setZero(len, len);
        for (Index i = 0; i < len; ++i) {
          double m = -std::numeric_limits<double>::infinity();
          for (Index j = 0; j <= i; ++j) {
            double dot = 0.0;
            for (Index e = 0; e < dh; ++e) dot += qh(i, e) * kh(j, e);
            p(i, j) = dot * scale;
            m = std::max(m, p(i, j));
          }
          double sum = 0.0;
          for (Index j = 0; j <= i; ++j) {
            p(i, j) = std::exp(p(i, j) - m);
            sum += p(i, j);
          }
          for (Index j = 0; j <= i; ++j) p(i, j) /= sum;
          for (Index e = 0; e < dh; ++e) {
            double acc = 0.0;
            for (Index j = 0; j <= i; ++j) acc += p(i, j) * vh(j, e);
            c.attn(s * len + i, h * dh + e) = acc;
          }
        }
      }
    }
    c.x_mid = c.x_in + nn::affine(c.attn, w.wo, w.bo);
    c.b = nn::layer_norm(c.x_mid, w.ln2_g, w.ln2_b, c.ln2);
    c.h_pre = nn::affine(c.b, w.w1, w.b1);
    c.h_act = c.h_pre.cwiseMax(0.0);
    x = c.x_mid + nn::affine(c.h_act, w.w2, w.b2);
  }
  cache.f = nn::layer_norm(x, pv.final_g, pv.final_b, cache.final_ln);
  return nn::affine(cache.f, pv.head_w, pv.head_b);
}

void amplitude_backward(const ParamViews& pv, GradViews& gv, const AnsatzConfig& cfg,
                        std::span<const int> tokens, Index n_seq, Index len, const AmplitudeCache& cache,
                        const MatrixXd& dlogits) {
  const Index d = cfg.d_model;
  const int n_heads = cfg.n_heads;
  const Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixXd df = nn::affine_backward(cache.f, dlogits, pv.head_w, gv.head_w, gv.head_b);
  MatrixXd dx = nn::layer_norm_backward(df, pv.final_g, cache.final_ln, gv.final_g, gv.final_b);

  for (int l = cfg.n_decoders - 1; l >= 0; --l) {
    const auto& w = pv.decoders[static_cast<std::size_t>(l)];
    auto& g = gv.decoders[static_cast<std::size_t>(l)];
    const auto& c = cache.layers[static_cast<std::size_t>(l)];

    // x_out = x_mid + relu(b W1 + b1) W2 + b2
    MatrixXd dh_act = nn::affine_backward(c.h_act, dx, w.w2, g.w2, g.b2);
    MatrixXd dh_pre = (dh_act.array() * (c.h_pre.array() > 0.0).cast<double>()).matrix();
    MatrixXd db = nn::affine_backward(c.b, dh_pre, w.w1, g.w1, g.b1);
    MatrixXd dx_mid = dx + nn::layer_norm_backward(db, w.ln2_g, c.ln2, g.ln2_g, g.ln2_b);

    // x_mid = x_in + attn Wo + bo
    MatrixXd dattn = nn::affine_backward(c.attn, dx_mid, w.wo, g.wo, g.bo);
    MatrixXd dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
    for (Index s = 0; s < n_seq; ++s) {
      for (int h = 0; h < n_heads; ++h) {
        const MatrixXd& p = c.probs[static_cast<std::size_t>(s * n_heads + h)];
        auto qh = c.q.block(s * len, h * dh, len, dh);
        auto kh = c.k.block(s * len, h * dh, len, dh);
        auto vh = c.v.block(s * len, h * dh, len, dh);
        auto doh = dattn.block(s * len, h * dh, len, dh);
        MatrixXd dp = doh * vh.transpose();
        dv.block(s * len, h * dh, len, dh).noalias() = p.transpose() * doh;
        const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
        MatrixXd ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
        dq.block(s * len, h * dh, len, dh).noalias() = ds * kh;
        dk.block(s * len, h * dh, len, dh).noalias() = ds.transpose() * qh;
      }
    }
    MatrixXd da = nn::affine_backward(c.a, dq, w.wq, g.wq, g.bq);
    da += nn::affine_backward(c.a, dk, w.wk, g.wk, g.bk);
    da += nn::affine_backward(c.a, dv, w.wv, g.wv, g.bv);
    dx = dx_mid + nn::layer_norm_backward(da, w.ln1_g, c.ln1, g.ln1_g, g.ln1_b);
  }
  for (Index r = 0; r < dx.rows(); ++r) {
    gv.embed.row(tokens[static_cast<std::size_t>(r)]) += dx.row(r);
  }
}

MatrixXd phase_inputs(std::span<const BasisState> states, int n_qubits) {
  MatrixXd x(static_cast<Index>(states.size()), n_qubits);
  for (std::size_t s = 0; s < states.size(); ++s) {
    for (int j = 0; j < n_qubits; ++j) x(static_cast<Index>(s), j) = states[s].test(j) ? 1.0 : -1.0;
  }
  return x;
}

Eigen::VectorXd phase_forward(const ParamViews& pv, MatrixXd x, PhaseCache& cache) {
  cache.inputs.clear();
  const std::size_t n_layers = pv.phase.size();
  for (std::size_t i = 0; i + 1 < n_layers; ++i) {
    cache.inputs.push_back(x);
    x = nn::affine(cache.inputs.back(), pv.phase[i].w, pv.phase[i].b).unaryExpr([](double v) { return std::tanh(v); });
  }
  cache.inputs.push_back(x);
  return nn::affine(cache.inputs.back(), pv.phase.back().w, pv.phase.back().b).col(0);
}

void phase_backward(const ParamViews& pv, GradViews& gv, const PhaseCache& cache, const Eigen::VectorXd& dout) {
  const std::size_t n_layers = pv.phase.size();
  MatrixXd dy = dout;
  for (std::size_t i = n_layers; i-- > 0;) {
    MatrixXd dx = nn::affine_backward(cache.inputs[i], dy, pv.phase[i].w, gv.phase[i].w, gv.phase[i].b);
    if (i == 0) break;
    // cache.inputs[i] = tanh(previous pre-activation)
    dy = (dx.array() * (1.0 - cache.inputs[i].array().square())).matrix();
  }
}

struct SequenceBatch {
  std::vector<int> input;   // BOS-shifted tokens, n_seq * len
  std::vector<int> target;  // the tokens themselves, n_seq * len
};

SequenceBatch full_sequences(std::span<const BasisState> states, int n_orb) {
  SequenceBatch b;
  b.input.reserve(states.size() * static_cast<std::size_t>(n_orb));
  b.target.reserve(states.size() * static_cast<std::size_t>(n_orb));
  for (const auto& x : states) {
    const auto toks = state_tokens(x, n_orb);
    b.input.push_back(kBeginToken);
    b.input.insert(b.input.end(), toks.begin(), toks.end() - 1);
    b.target.insert(b.target.end(), toks.begin(), toks.end());
  }
  return b;
}

void check_sector(std::span<const BasisState> states, const AnsatzConfig& cfg) {
  for (const auto& x : states) {
    if (!in_sector(x, cfg.n_qubits, cfg.n_up, cfg.n_down)) {
      throw Error("state " + to_bitstring(x, cfg.n_qubits) + " lies outside the (" + std::to_string(cfg.n_up) +
                  ", " + std::to_string(cfg.n_down) + ") electron sector");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Ansatz

Ansatz::Ansatz(AnsatzConfig cfg) : cfg_(std::move(cfg)), layout_(cfg_), params_(init_params(cfg_)) {}

Ansatz::Ansatz(AnsatzConfig cfg, Vector params) : cfg_(std::move(cfg)), layout_(cfg_) {
  set_params(std::move(params));
}

void Ansatz::set_params(Vector p) {
  if (p.size() != layout_.size()) {
    throw Error("parameter vector has length " + std::to_string(p.size()) + ", layout expects " +
                std::to_string(layout_.size()));
  }
  if (!p.allFinite()) throw NumericalError("parameter vector contains non-finite entries");
  params_ = std::move(p);
}

ConditionalDist Ansatz::masked_conditionals(std::span<const int> prefix) const {
  std::vector<std::vector<int>> one{std::vector<int>(prefix.begin(), prefix.end())};
  return masked_conditionals_batch(one).front();
}

std::vector<ConditionalDist> Ansatz::masked_conditionals_batch(std::span<const std::vector<int>> prefixes) const {
  std::vector<ConditionalDist> out(prefixes.size());
  if (prefixes.empty()) return out;
  const int n_orb = cfg_.n_orbitals();
  const std::size_t t = prefixes.front().size();
  if (static_cast<int>(t) >= n_orb) throw Error("prefix length must be below the number of orbitals");
  const Index len = static_cast<Index>(t) + 1;
  const ParamViews pv(layout_, cfg_, params_.data());
  const std::size_t n_chunks = (prefixes.size() + kChunk - 1) / kChunk;

  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(prefixes.size(), lo + kChunk);
    std::vector<int> input;
    input.reserve((hi - lo) * static_cast<std::size_t>(len));
    for (std::size_t s = lo; s < hi; ++s) {
      if (prefixes[s].size() != t) throw Error("prefixes in a batch must share one length");
      input.push_back(kBeginToken);
      input.insert(input.end(), prefixes[s].begin(), prefixes[s].end());
    }
    AmplitudeCache cache;
    const MatrixXd logits = amplitude_forward(pv, cfg_, input, static_cast<Index>(hi - lo), len, cache);
    for (std::size_t s = lo; s < hi; ++s) {
      int up = 0, down = 0;
      for (int tok : prefixes[s]) {
        up += tok & 1;
        down += (tok >> 1) & 1;
      }
      const auto allowed = feasible_tokens(static_cast<int>(t), up, down, n_orb, cfg_.n_up, cfg_.n_down);
      const Logits row = logits.row(static_cast<Index>(s - lo) * len + len - 1);
      Logits logp;
      if (!nn::masked_log_softmax<double, kTokenCount>(row, allowed, logp)) {
        throw Error("infeasible prefix: every next token violates the electron counts");
      }
      for (int k = 0; k < kTokenCount; ++k) out[s][static_cast<std::size_t>(k)] = std::exp(logp(k));
    }
  });
  return out;
}

std::vector<ConditionalDist> Ansatz::path_conditionals(const BasisState& x) const {
  const BasisState one[] = {x};
  check_sector(one, cfg_);
  const int n_orb = cfg_.n_orbitals();
  const ParamViews pv(layout_, cfg_, params_.data());
  const SequenceBatch seq = full_sequences(one, n_orb);
  AmplitudeCache cache;
  const MatrixXd logits = amplitude_forward(pv, cfg_, seq.input, 1, n_orb, cache);
  std::vector<ConditionalDist> out(static_cast<std::size_t>(n_orb));
  int up = 0, down = 0;
  for (int t = 0; t < n_orb; ++t) {
    const auto allowed = feasible_tokens(t, up, down, n_orb, cfg_.n_up, cfg_.n_down);
    Logits logp;
    nn::masked_log_softmax<double, kTokenCount>(logits.row(t), allowed, logp);
    for (int k = 0; k < kTokenCount; ++k) out[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] = std::exp(logp(k));
    const int tok = seq.target[static_cast<std::size_t>(t)];
    up += tok & 1;
    down += (tok >> 1) & 1;
  }
  return out;
}

std::vector<AmplitudePhase> Ansatz::log_amp_phase(std::span<const BasisState> states) const {
  check_sector(states, cfg_);
  std::vector<AmplitudePhase> out(states.size());
  const int n_orb = cfg_.n_orbitals();
  const Index len = n_orb;
  const ParamViews pv(layout_, cfg_, params_.data());
  const std::size_t n_chunks = (states.size() + kChunk - 1) / kChunk;

  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(states.size(), lo + kChunk);
    const auto chunk = states.subspan(lo, hi - lo);
    const SequenceBatch seq = full_sequences(chunk, n_orb);
    AmplitudeCache cache;
    const MatrixXd logits = amplitude_forward(pv, cfg_, seq.input, static_cast<Index>(chunk.size()), len, cache);
    PhaseCache pcache;
    const Eigen::VectorXd phase = phase_forward(pv, phase_inputs(chunk, cfg_.n_qubits), pcache);
    for (std::size_t s = 0; s < chunk.size(); ++s) {
      double log_prob = 0.0;
      int up = 0, down = 0;
      for (int t = 0; t < n_orb; ++t) {
        const Index r = static_cast<Index>(s) * len + t;
        const auto allowed = feasible_tokens(t, up, down, n_orb, cfg_.n_up, cfg_.n_down);
        Logits logp;
        nn::masked_log_softmax<double, kTokenCount>(logits.row(r), allowed, logp);
        const int tok = seq.target[static_cast<std::size_t>(r)];
        log_prob += logp(tok);
        up += tok & 1;
        down += (tok >> 1) & 1;
      }
      out[lo + s] = {0.5 * log_prob, phase(static_cast<Index>(s))};
    }
  });
  return out;
}

Ansatz::Vector Ansatz::backward(std::span<const BasisState> states, std::span<const double> a_weights,
                                std::span<const double> b_weights) const {
  if (a_weights.size() != states.size() || b_weights.size() != states.size()) {
    throw Error("backward: weight vectors must match the number of states");
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!std::isfinite(a_weights[i]) || !std::isfinite(b_weights[i])) {
      throw NumericalError("backward: non-finite sample weight at index " + std::to_string(i));
    }
  }
  check_sector(states, cfg_);
  const int n_orb = cfg_.n_orbitals();
  const Index len = n_orb;
  const ParamViews pv(layout_, cfg_, params_.data());
  const std::size_t n_chunks = (states.size() + kChunk - 1) / kChunk;
  std::vector<Vector> partial(n_chunks);

  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(states.size(), lo + kChunk);
    const auto chunk = states.subspan(lo, hi - lo);
    Vector grad = Vector::Zero(layout_.size());
    GradViews gv(layout_, cfg_, grad.data());

    const SequenceBatch seq = full_sequences(chunk, n_orb);
    AmplitudeCache cache;
    const MatrixXd logits = amplitude_forward(pv, cfg_, seq.input, static_cast<Index>(chunk.size()), len, cache);
    MatrixXd dlogits = MatrixXd::Zero(logits.rows(), logits.cols());
    for (std::size_t s = 0; s < chunk.size(); ++s) {
      const double a = 0.5 * a_weights[lo + s];
      int up = 0, down = 0;
      for (int t = 0; t < n_orb; ++t) {
        const Index r = static_cast<Index>(s) * len + t;
        const auto allowed = feasible_tokens(t, up, down, n_orb, cfg_.n_up, cfg_.n_down);
        Logits logp;
        nn::masked_log_softmax<double, kTokenCount>(logits.row(r), allowed, logp);
        const int tok = seq.target[static_cast<std::size_t>(r)];
        for (int k = 0; k < kTokenCount; ++k) {
          if (!allowed[static_cast<std::size_t>(k)]) continue;
          dlogits(r, k) = a * ((k == tok ? 1.0 : 0.0) - std::exp(logp(k)));
        }
        up += tok & 1;
        down += (tok >> 1) & 1;
      }
    }
    amplitude_backward(pv, gv, cfg_, seq.input, static_cast<Index>(chunk.size()), len, cache, dlogits);

    PhaseCache pcache;
    phase_forward(pv, phase_inputs(chunk, cfg_.n_qubits), pcache);
    Eigen::VectorXd dout(static_cast<Index>(chunk.size()));
    for (std::size_t s = 0; s < chunk.size(); ++s) dout(static_cast<Index>(s)) = b_weights[lo + s];
    phase_backward(pv, gv, pcache, dout);
    partial[c] = std::move(grad);
  });

  Vector grad = Vector::Zero(layout_.size());
  for (const auto& g : partial) grad += g;
  for (const auto& blk : layout_.blocks()) {
    if (!grad.segment(blk.offset, blk.size()).allFinite()) {
      throw NumericalError("backward: non-finite gradient in parameter block '" + blk.name + "'");
    }
  }
  return grad;
}

}  // namespace nnqs
