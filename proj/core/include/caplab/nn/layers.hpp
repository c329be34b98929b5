#pragma once

#include <optional>
#include <string>
#include <vector>

#include "caplab/nn/graph.hpp"
#include "caplab/nn/params.hpp"

namespace caplab::nn {

// Low-rank adapter for one weight matrix W (out x in): the effective
// weight is W + (alpha/rank) * B * A with A (rank x in), B (out x rank).
// B starts at zero, so an adapted layer is initially the frozen layer.
struct LoraAdapter {
  Param* A = nullptr;
  Param* B = nullptr;
  double scaling = 0.0;  // alpha / rank
};

// y = x W^T + b, rows are items. Optionally carries a LoRA adapter.
struct Linear {
  Param* W = nullptr;  // (out, in)
  Param* b = nullptr;  // (1, out)
  std::optional<LoraAdapter> lora;

  int apply(Graph& g, int x) const;
  Mat apply_value(const Mat& x) const;
};

struct LayerNorm {
  Param* gain = nullptr;  // (1, d)
  Param* bias = nullptr;  // (1, d)
  double eps = 1e-5;

  int apply(Graph& g, int x) const;
  Mat apply_value(const Mat& x) const;
};

// Multi-head attention block parameters (shared by graph and value paths).
struct AttentionBlock {
  Linear q, k, v, o;
  int heads = 1;
};

// mask, when present, is an additive (rows(q) x rows(kv)) matrix applied
// to every head's attention scores; use -inf to forbid a position.
int multi_head_attention(Graph& g, const AttentionBlock& blk, int q_in, int kv_in,
                         const Mat* mask = nullptr);
Mat multi_head_attention_value(const AttentionBlock& blk, const Mat& q_in, const Mat& kv_in,
                               const Mat* mask = nullptr);
// Value path with precomputed key/value projections (decode cache).
Mat multi_head_attention_cached(const AttentionBlock& blk, const Mat& q_in, const Mat& k_proj,
                                const Mat& v_proj);

struct FeedForward {
  Linear up, down;

  int apply(Graph& g, int x) const;
  Mat apply_value(const Mat& x) const;
};

// Sinusoidal position encodings, rows = positions.
Mat sinusoidal_positions(Eigen::Index n_pos, Eigen::Index dim, Eigen::Index offset = 0);

Mat softmax_rows_value(const Mat& z, const Mat* mask = nullptr);

// ---------------------------------------------------------------------------
// Construction helpers: create the parameters for a block inside a store
// under a name prefix. Initialization is derived from (seed, param name)
// so it is independent of creation order.
// ---------------------------------------------------------------------------
Linear make_linear(ParamStore& store, const std::string& prefix, Eigen::Index in,
                   Eigen::Index out, std::uint64_t seed);
LayerNorm make_layer_norm(ParamStore& store, const std::string& prefix, Eigen::Index d);
AttentionBlock make_attention(ParamStore& store, const std::string& prefix, Eigen::Index d,
                              int heads, std::uint64_t seed);
FeedForward make_feed_forward(ParamStore& store, const std::string& prefix, Eigen::Index d,
                              Eigen::Index hidden, std::uint64_t seed);

}  // namespace caplab::nn
