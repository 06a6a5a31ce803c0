// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ecgjepa/rng.hpp"
#include "ecgjepa/tensor.hpp"

/// Transformer building blocks with hand-written backward passes. Tokens are
/// rows; every forward optionally records what its backward needs in a cache.
namespace ecgjepa::nn {

inline constexpr double kLayerNormEps = 1e-6;
/// Additive bias for disallowed attention pairs.
inline constexpr double kMaskedLogit = -1e9;

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

/// Per-row layer normalisation; pass null gamma/beta for the non-affine form.
template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>* gamma, const Mat<T>* beta, LayerNormCache<T>* cache);

/// Returns dx; accumulates into dgamma/dbeta when given.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LayerNormCache<T>& cache, const Mat<T>* gamma, Mat<T>* dgamma,
                           Mat<T>* dbeta);

/// Exact (erf) GELU.
template <typename T>
Mat<T> gelu(const Mat<T>& x);
template <typename T>
Mat<T> gelu_backward(const Mat<T>& dy, const Mat<T>& x);

/// Tokens are split into consecutive segments of `segment_len` rows that
/// attend only within themselves; `bias` (segment_len x segment_len, additive
/// before the softmax) applies to every segment when set.
template <typename T>
struct AttentionLayout {
  Eigen::Index segment_len = 0;
  const Mat<T>* bias = nullptr;
};

template <typename T>
struct BlockCache {
  Mat<T> x_in;
  Mat<T> h1;
  LayerNormCache<T> ln1;
  Mat<T> qkv;
  std::vector<Mat<T>> probs;  // one per (segment, head)
  Mat<T> attn_out;            // concatenated heads, before the projection
  Mat<T> x_mid;
  Mat<T> h2;
  LayerNormCache<T> ln2;
  Mat<T> fc1_pre;
  Mat<T> fc1_act;
  T attn_scale = T(1);  // residual branch multipliers: 0 when dropped
  T mlp_scale = T(1);
};

/// Adds the tensors of one pre-norm block under `prefix`.
template <typename T>
void add_block_parameters(ParameterSet<T>& params, const std::string& prefix, Eigen::Index dim,
                          Eigen::Index hidden, Rng& rng);

/// x + s_a * Attn(LN1(x)), then + s_m * MLP(LN2(.)). The branch scales carry
/// stochastic depth: 0 drops the branch, 1/(1-p) keeps it during training.
template <typename T>
Mat<T> block_forward(const ParameterSet<T>& params, const std::string& prefix, const Mat<T>& x, int heads,
                     const AttentionLayout<T>& layout, T attn_scale, T mlp_scale, BlockCache<T>* cache);

/// Returns d(input); accumulates parameter gradients into `grads`.
template <typename T>
Mat<T> block_backward(const ParameterSet<T>& params, const std::string& prefix, const Mat<T>& dy,
                      const BlockCache<T>& cache, int heads, const AttentionLayout<T>& layout,
                      ParameterSet<T>& grads);

/// Fills a tensor with truncated-normal(0, stddev) draws.
template <typename T>
void fill_truncated_normal(Mat<T>& m, double stddev, Rng& rng);

}  // namespace ecgjepa::nn
