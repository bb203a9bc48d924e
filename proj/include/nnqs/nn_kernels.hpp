#pragma once

// Dense building blocks shared by the amplitude and phase networks. Rows are
// samples (or sequence positions), columns are features; weights map
// in-features to out-features as `x * W`.

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace nnqs::nn {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <class Scalar>
struct LayerNormCache {
  Mat<Scalar> xhat;
  Vec<Scalar> inv_std;
};

/// Row-wise layer normalization with learned gain and bias. Each row is
/// reduced left to right, so a row's output does not depend on the batch.
template <class Scalar, class Gain, class Bias>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, const Eigen::MatrixBase<Gain>& gain,
                       const Eigen::MatrixBase<Bias>& bias, LayerNormCache<Scalar>& cache,
                       Scalar eps = Scalar(1e-5)) {
  const Eigen::Index n = x.rows(), d = x.cols();
  cache.xhat.resize(n, d);
  cache.inv_std.resize(n);
  Mat<Scalar> y(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    Scalar mean = 0;
    for (Eigen::Index j = 0; j < d; ++j) mean += x(r, j);
    mean /= static_cast<Scalar>(d);
    Scalar var = 0;
    for (Eigen::Index j = 0; j < d; ++j) var += (x(r, j) - mean) * (x(r, j) - mean);
    var /= static_cast<Scalar>(d);
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    cache.inv_std(r) = inv;
    for (Eigen::Index j = 0; j < d; ++j) {
      cache.xhat(r, j) = (x(r, j) - mean) * inv;
      y(r, j) = cache.xhat(r, j) * gain(j) + bias(j);
    }
  }
  return y;
}

/// Returns dL/dx and accumulates dL/dgain, dL/dbias.
template <class Scalar, class Gain, class DGain, class DBias>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy, const Eigen::MatrixBase<Gain>& gain,
                                const LayerNormCache<Scalar>& cache,
                                Eigen::MatrixBase<DGain> const& dgain_,
                                Eigen::MatrixBase<DBias> const& dbias_) {
  auto& dgain = const_cast<Eigen::MatrixBase<DGain>&>(dgain_);
  auto& dbias = const_cast<Eigen::MatrixBase<DBias>&>(dbias_);
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Mat<Scalar> dxhat = dy * gain.asDiagonal();
  const auto d = static_cast<Scalar>(dy.cols());
  const Vec<Scalar> mean_dxhat = dxhat.rowwise().sum() / d;
  const Vec<Scalar> mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix() / d;
  Mat<Scalar> dx = dxhat.colwise() - mean_dxhat;
  dx -= mean_dxhat_xhat.asDiagonal() * cache.xhat;
  return cache.inv_std.asDiagonal() * dx;
}

/// y = x W + b (b broadcast over rows). Every output entry is accumulated over
/// k in order, so a row's output does not depend on the other rows.
template <class Scalar, class W, class B>
Mat<Scalar> affine(const Mat<Scalar>& x, const Eigen::MatrixBase<W>& w, const Eigen::MatrixBase<B>& b) {
  using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index n = x.rows(), kdim = w.rows(), m = w.cols();
  const RowMat wr = w;
  RowMat y = RowMat::Zero(n, m);
  for (Eigen::Index r = 0; r < n; ++r) {
    Scalar* yr = y.row(r).data();
    for (Eigen::Index k = 0; k < kdim; ++k) {
      const Scalar xv = x(r, k);
      const Scalar* wk = wr.row(k).data();
      for (Eigen::Index j = 0; j < m; ++j) yr[j] += xv * wk[j];
    }
    for (Eigen::Index j = 0; j < m; ++j) yr[j] += b(j);
  }
  return y;
}

/// Backward of `affine`: accumulates dW, db and returns dx.
template <class Scalar, class W, class DW, class DB>
Mat<Scalar> affine_backward(const Mat<Scalar>& x, const Mat<Scalar>& dy, const Eigen::MatrixBase<W>& w,
                            Eigen::MatrixBase<DW> const& dw_, Eigen::MatrixBase<DB> const& db_) {
  auto& dw = const_cast<Eigen::MatrixBase<DW>&>(dw_);
  auto& db = const_cast<Eigen::MatrixBase<DB>&>(db_);
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  return dy * w.transpose();
}

/// Log-softmax of `logits` over the entries where `allowed` is set; masked
/// entries get -inf. Returns false when nothing is allowed.
template <class Scalar, int K>
bool masked_log_softmax(const Eigen::Matrix<Scalar, 1, K>& logits, const std::array<bool, K>& allowed,
                        Eigen::Matrix<Scalar, 1, K>& out) {
  Scalar max_logit = -std::numeric_limits<Scalar>::infinity();
  for (int k = 0; k < K; ++k) {
    if (allowed[static_cast<std::size_t>(k)]) max_logit = std::max(max_logit, logits(k));
  }
  if (!std::isfinite(max_logit)) return false;
  Scalar sum = 0;
  for (int k = 0; k < K; ++k) {
    if (allowed[static_cast<std::size_t>(k)]) sum += std::exp(logits(k) - max_logit);
  }
  const Scalar lse = max_logit + std::log(sum);
  for (int k = 0; k < K; ++k) {
    out(k) = allowed[static_cast<std::size_t>(k)] ? logits(k) - lse
                                                  : -std::numeric_limits<Scalar>::infinity();
  }
  return true;
}

/// Fixed sinusoidal position encoding, `length` x `d_model`.
template <class Scalar>
Mat<Scalar> sinusoidal_positions(int length, int d_model) {
  Mat<Scalar> pe(length, d_model);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d_model);
      const double angle = pos * rate;
      pe(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace nnqs::nn
