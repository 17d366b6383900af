#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metatne/matrix.hpp"
#include "metatne/rng.hpp"

namespace metatne {

struct TransformConfig {
  int d = 128;
  int d_prime = 128;
  int heads = 2;
  int d_ff = 256;
  int blocks = 2;
  double p_drop = 0.1;
  double ln_epsilon = 1e-5;

  int head_dim() const { return d_prime / heads; }
  void validate() const;
};

// One computation block: multi-head self-attention, output projection,
// node-wise feed-forward, two layer norms. Residual/dropout wiring lives in
// the forward pass.
struct AttentionBlock {
  std::vector<Mat> w_q, w_k, w_v;  // per head, head_dim x d
  Mat w_o;                         // d x d_prime
  Mat ffn_w1;                      // d_ff x d
  std::vector<double> ffn_b1;      // d_ff
  Mat ffn_w2;                      // d x d_ff
  std::vector<double> ffn_b2;      // d
  std::vector<double> ln1_gain, ln1_bias;  // d
  std::vector<double> ln2_gain, ln2_bias;  // d
};

struct TransformParams {
  TransformConfig config;
  std::vector<AttentionBlock> blocks;

  size_t param_count() const;
  double squared_norm() const;
};

// Flat views over every trainable tensor in declaration order; shared by the
// optimizer, checkpoint IO, and finite-difference tests.
std::vector<std::span<double>> tensor_views(TransformParams& p);
std::vector<std::span<const double>> tensor_views(const TransformParams& p);

// Same shapes as params, all zeros; gradient buffer.
TransformParams zeros_like(const TransformParams& p);

TransformParams init_transform(const TransformConfig& cfg, uint64_t seed);

enum class TransformMode { train, eval };

struct BlockCache {
  Mat x;                      // block input
  std::vector<Mat> q, k, v;   // per head
  std::vector<Mat> omega;     // per head, row-stochastic
  Mat concat;                 // concatenated head outputs
  Mat attn_proj;              // after w_o, before dropout
  std::vector<double> drop1;  // per-element multiplier; empty = identity
  std::vector<double> ln1_rstd;
  Mat ln1_xhat;
  Mat y;      // after first layer norm
  Mat ffn_h;  // pre-activation hidden
  Mat ffn_out;
  std::vector<double> drop2;
  std::vector<double> ln2_rstd;
  Mat ln2_xhat;
};

struct TransformCache {
  std::vector<int> perm;  // internal slot -> external row
  std::vector<BlockCache> blocks;
  TransformMode mode = TransformMode::eval;
};

// Row-stochastic attention weights for one head on the given set:
// omega_ij = softmax_j((W_Q x_i) . (W_K x_j) / sqrt(d_head)).
Mat attention_weights(const Mat& x, const Mat& w_q, const Mat& w_k);

// Runs the stacked blocks over a set arranged as rows of x; row 0 is the
// query. Support rows are canonicalized internally so that permuting them
// permutes the outputs bit-for-bit. Pass a cache to enable backward.
Mat transform_forward(const Mat& x, const TransformParams& params, TransformMode mode,
                      Rng* dropout_rng, TransformCache* cache);

struct SetOutput {
  std::vector<double> query_out;
  Mat support_outs;
};

// Adapts one query together with its support set (either polarity). The same
// parameters serve the positive-set and negative-set calls.
SetOutput transform_set(const double* query, const Mat& supports, const TransformParams& params,
                        TransformMode mode, Rng* dropout_rng);

// Exact gradients for a cached forward. d_output is the upstream gradient on
// the forward's return value (external row order). Parameter gradients
// accumulate into grads; the return value is the gradient on the input rows.
Mat transform_backward(const TransformCache& cache, const TransformParams& params,
                       const Mat& d_output, TransformParams& grads);

// Parameter checkpoint: binary header (magic + config), then each block's
// tensors in declaration order as row-major f32.
void save_transform(const TransformParams& params, const std::string& path);
TransformParams load_transform(const std::string& path);

}  // namespace metatne
