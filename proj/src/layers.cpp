// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/layers.hpp"

#include <cmath>
#include <numbers>

#include "ecgjepa/error.hpp"

namespace ecgjepa::nn {
namespace {

template <typename T>
Mat<T> linear(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
  Mat<T> y(x.rows(), w.cols());
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
  return y;
}

// Accumulates dW, db and returns dx.
template <typename T>
Mat<T> linear_backward(const Mat<T>& dy, const Mat<T>& x, const Mat<T>& w, Mat<T>& dw, Mat<T>& db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  Mat<T> dx(dy.rows(), w.rows());
  dx.noalias() = dy * w.transpose();
  return dx;
}

template <typename T>
void check_width(const Mat<T>& x, Eigen::Index dim, const std::string& where) {
  if (x.cols() != dim) {
    throw ValidationError(where + ": expected width " + std::to_string(dim) + ", got " + std::to_string(x.cols()));
  }
}

template <typename T>
Mat<T> attention_forward(const Mat<T>& qkv, int heads, const AttentionLayout<T>& layout, std::vector<Mat<T>>* probs) {
  const Eigen::Index n = qkv.rows();
  const Eigen::Index dim = qkv.cols() / 3;
  const Eigen::Index dh = dim / heads;
  const Eigen::Index m = layout.segment_len;
  if (m <= 0 || n % m != 0) throw ValidationError("attention: token count not a multiple of segment length");
  if (layout.bias && (layout.bias->rows() != m || layout.bias->cols() != m)) {
    throw ValidationError("attention: bias shape does not match segment length");
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> out(n, dim);
  if (probs) probs->clear();
  Mat<T> s(m, m);
  for (Eigen::Index r0 = 0; r0 < n; r0 += m) {
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.block(r0, h * dh, m, dh);
      const auto k = qkv.block(r0, dim + h * dh, m, dh);
      const auto v = qkv.block(r0, 2 * dim + h * dh, m, dh);
      s.noalias() = q * k.transpose();
      s *= scale;
      if (layout.bias) s += *layout.bias;
      for (Eigen::Index i = 0; i < m; ++i) {
        auto row = s.row(i).array();
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
      }
      out.block(r0, h * dh, m, dh).noalias() = s * v;
      if (probs) probs->push_back(s);
    }
  }
  return out;
}

template <typename T>
Mat<T> attention_backward(const Mat<T>& d_out, const Mat<T>& qkv, const std::vector<Mat<T>>& probs, int heads,
                          const AttentionLayout<T>& layout) {
  const Eigen::Index n = qkv.rows();
  const Eigen::Index dim = qkv.cols() / 3;
  const Eigen::Index dh = dim / heads;
  const Eigen::Index m = layout.segment_len;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> d_qkv(n, 3 * dim);
  Mat<T> dp(m, m);
  std::size_t idx = 0;
  for (Eigen::Index r0 = 0; r0 < n; r0 += m) {
    for (int h = 0; h < heads; ++h, ++idx) {
      const Mat<T>& p = probs[idx];
      const auto q = qkv.block(r0, h * dh, m, dh);
      const auto k = qkv.block(r0, dim + h * dh, m, dh);
      const auto v = qkv.block(r0, 2 * dim + h * dh, m, dh);
      const auto dout = d_out.block(r0, h * dh, m, dh);
      dp.noalias() = dout * v.transpose();
      d_qkv.block(r0, 2 * dim + h * dh, m, dh).noalias() = p.transpose() * dout;
      // Softmax Jacobian: dS = P o (dP - rowsum(P o dP)).
      const Eigen::Matrix<T, Eigen::Dynamic, 1> inner = (p.array() * dp.array()).rowwise().sum();
      dp = (p.array() * (dp.array().colwise() - inner.array())).matrix();
      dp *= scale;
      d_qkv.block(r0, h * dh, m, dh).noalias() = dp * k;
      d_qkv.block(r0, dim + h * dh, m, dh).noalias() = dp.transpose() * q;
    }
  }
  return d_qkv;
}

}  // namespace

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>* gamma, const Mat<T>* beta, LayerNormCache<T>* cache) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Mat<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const auto centered = x.row(i).array() - mean;
    const T var = centered.square().mean();
    rstd[i] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    xhat.row(i) = (centered * rstd[i]).matrix();
  }
  Mat<T> y = xhat;
  if (gamma) {
    y.array().rowwise() *= gamma->row(0).array();
    y.rowwise() += beta->row(0);
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LayerNormCache<T>& cache, const Mat<T>* gamma, Mat<T>* dgamma,
                           Mat<T>* dbeta) {
  Mat<T> dxhat = dy;
  if (gamma) {
    if (dgamma) dgamma->row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    if (dbeta) dbeta->row(0) += dy.colwise().sum();
    dxhat.array().rowwise() *= gamma->row(0).array();
  }
  const Eigen::Index d = dy.cols();
  Mat<T> dx(dy.rows(), d);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_dxhat = dxhat.row(i).mean();
    const T mean_dxhat_xhat = dxhat.row(i).dot(cache.xhat.row(i)) / static_cast<T>(d);
    dx.row(i) = (cache.rstd[i] *
                 (dxhat.row(i).array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat))
                    .matrix();
  }
  return dx;
}

template <typename T>
Mat<T> gelu(const Mat<T>& x) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  return x.unaryExpr([inv_sqrt2](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& dy, const Mat<T>& x) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  const T inv_sqrt2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
  const Mat<T> slope = x.unaryExpr([inv_sqrt2, inv_sqrt2pi](T v) {
    return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * std::exp(T(-0.5) * v * v) * inv_sqrt2pi;
  });
  return dy.cwiseProduct(slope);
}

template <typename T>
void fill_truncated_normal(Mat<T>& m, double stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.truncated_normal(stddev));
}

template <typename T>
void add_block_parameters(ParameterSet<T>& params, const std::string& prefix, Eigen::Index dim,
                          Eigen::Index hidden, Rng& rng) {
  params.add_vector(prefix + "norm1.weight", dim).setOnes();
  params.add_vector(prefix + "norm1.bias", dim);
  fill_truncated_normal(params.add_matrix(prefix + "attn.qkv.weight", dim, 3 * dim), 0.02, rng);
  params.add_vector(prefix + "attn.qkv.bias", 3 * dim);
  fill_truncated_normal(params.add_matrix(prefix + "attn.proj.weight", dim, dim), 0.02, rng);
  params.add_vector(prefix + "attn.proj.bias", dim);
  params.add_vector(prefix + "norm2.weight", dim).setOnes();
  params.add_vector(prefix + "norm2.bias", dim);
  fill_truncated_normal(params.add_matrix(prefix + "mlp.fc1.weight", dim, hidden), 0.02, rng);
  params.add_vector(prefix + "mlp.fc1.bias", hidden);
  fill_truncated_normal(params.add_matrix(prefix + "mlp.fc2.weight", hidden, dim), 0.02, rng);
  params.add_vector(prefix + "mlp.fc2.bias", dim);
}

template <typename T>
Mat<T> block_forward(const ParameterSet<T>& p, const std::string& prefix, const Mat<T>& x, int heads,
                     const AttentionLayout<T>& layout, T attn_scale, T mlp_scale, BlockCache<T>* cache) {
  const auto& qkv_w = p[prefix + "attn.qkv.weight"];
  check_width(x, qkv_w.rows(), prefix + "block");

  Mat<T> x_mid = x;
  LayerNormCache<T> ln1;
  Mat<T> h1, qkv, attn_out;
  std::vector<Mat<T>> probs;
  if (attn_scale != T(0)) {
    h1 = layer_norm(x, &p[prefix + "norm1.weight"], &p[prefix + "norm1.bias"], cache ? &ln1 : nullptr);
    qkv = linear(h1, qkv_w, p[prefix + "attn.qkv.bias"]);
    attn_out = attention_forward(qkv, heads, layout, cache ? &probs : nullptr);
    x_mid += attn_scale * linear(attn_out, p[prefix + "attn.proj.weight"], p[prefix + "attn.proj.bias"]);
  }

  Mat<T> y = x_mid;
  LayerNormCache<T> ln2;
  Mat<T> h2, fc1_pre, fc1_act;
  if (mlp_scale != T(0)) {
    h2 = layer_norm(x_mid, &p[prefix + "norm2.weight"], &p[prefix + "norm2.bias"], cache ? &ln2 : nullptr);
    fc1_pre = linear(h2, p[prefix + "mlp.fc1.weight"], p[prefix + "mlp.fc1.bias"]);
    fc1_act = gelu(fc1_pre);
    y += mlp_scale * linear(fc1_act, p[prefix + "mlp.fc2.weight"], p[prefix + "mlp.fc2.bias"]);
  }

  if (cache) {
    cache->x_in = x;
    cache->h1 = std::move(h1);
    cache->ln1 = std::move(ln1);
    cache->qkv = std::move(qkv);
    cache->probs = std::move(probs);
    cache->attn_out = std::move(attn_out);
    cache->x_mid = std::move(x_mid);
    cache->h2 = std::move(h2);
    cache->ln2 = std::move(ln2);
    cache->fc1_pre = std::move(fc1_pre);
    cache->fc1_act = std::move(fc1_act);
    cache->attn_scale = attn_scale;
    cache->mlp_scale = mlp_scale;
  }
  return y;
}

template <typename T>
Mat<T> block_backward(const ParameterSet<T>& p, const std::string& prefix, const Mat<T>& dy,
                      const BlockCache<T>& c, int heads, const AttentionLayout<T>& layout, ParameterSet<T>& g) {
  Mat<T> dx_mid = dy;
  if (c.mlp_scale != T(0)) {
    const Mat<T> d_branch = c.mlp_scale * dy;
    Mat<T> d_act = linear_backward(d_branch, c.fc1_act, p[prefix + "mlp.fc2.weight"], g[prefix + "mlp.fc2.weight"],
                                   g[prefix + "mlp.fc2.bias"]);
    const Mat<T> d_pre = gelu_backward(d_act, c.fc1_pre);
    const Mat<T> d_h2 = linear_backward(d_pre, c.h2, p[prefix + "mlp.fc1.weight"], g[prefix + "mlp.fc1.weight"],
                                        g[prefix + "mlp.fc1.bias"]);
    dx_mid += layer_norm_backward(d_h2, c.ln2, &p[prefix + "norm2.weight"], &g[prefix + "norm2.weight"],
                                  &g[prefix + "norm2.bias"]);
  }

  Mat<T> dx = dx_mid;
  if (c.attn_scale != T(0)) {
    const Mat<T> d_branch = c.attn_scale * dx_mid;
    const Mat<T> d_attn = linear_backward(d_branch, c.attn_out, p[prefix + "attn.proj.weight"],
                                          g[prefix + "attn.proj.weight"], g[prefix + "attn.proj.bias"]);
    const Mat<T> d_qkv = attention_backward(d_attn, c.qkv, c.probs, heads, layout);
    const Mat<T> d_h1 = linear_backward(d_qkv, c.h1, p[prefix + "attn.qkv.weight"], g[prefix + "attn.qkv.weight"],
                                        g[prefix + "attn.qkv.bias"]);
    dx += layer_norm_backward(d_h1, c.ln1, &p[prefix + "norm1.weight"], &g[prefix + "norm1.weight"],
                              &g[prefix + "norm1.bias"]);
  }
  return dx;
}

#define ECGJEPA_INSTANTIATE_LAYERS(T)                                                                          \
  template Mat<T> layer_norm<T>(const Mat<T>&, const Mat<T>*, const Mat<T>*, LayerNormCache<T>*);             \
  template Mat<T> layer_norm_backward<T>(const Mat<T>&, const LayerNormCache<T>&, const Mat<T>*, Mat<T>*,     \
                                         Mat<T>*);                                                            \
  template Mat<T> gelu<T>(const Mat<T>&);                                                                     \
  template Mat<T> gelu_backward<T>(const Mat<T>&, const Mat<T>&);                                             \
  template void fill_truncated_normal<T>(Mat<T>&, double, Rng&);                                              \
  template void add_block_parameters<T>(ParameterSet<T>&, const std::string&, Eigen::Index, Eigen::Index,     \
                                        Rng&);                                                                \
  template Mat<T> block_forward<T>(const ParameterSet<T>&, const std::string&, const Mat<T>&, int,            \
                                   const AttentionLayout<T>&, T, T, BlockCache<T>*);                          \
  template Mat<T> block_backward<T>(const ParameterSet<T>&, const std::string&, const Mat<T>&,                \
                                    const BlockCache<T>&, int, const AttentionLayout<T>&, ParameterSet<T>&);

ECGJEPA_INSTANTIATE_LAYERS(float)
ECGJEPA_INSTANTIATE_LAYERS(double)

}  // namespace ecgjepa::nn
