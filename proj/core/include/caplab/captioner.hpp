#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caplab/nn/layers.hpp"
#include "caplab/rng.hpp"
#include "caplab/vocab.hpp"

namespace caplab {

using Mat = Eigen::MatrixXd;

struct CaptionerConfig {
  int enc_layers = 3;
  int dec_layers = 3;
  int hidden = 512;
  int heads = 8;
  int ffn = 2048;
  int feature_dim = 256;
  int feature_slots = 16;
  int vocab_size = 0;
  int max_len = 20;  // decode budget in emitted tokens (EOS included)
  bool feature_pos_encoding = true;
  std::uint64_t init_seed = 1;

  void validate() const;
  // Hash over the architecture-defining fields; checkpoints carry it and
  // loading rejects a mismatch.
  std::string identity_hash() const;
};

struct DecodeResult {
  std::vector<TokenSequence> sequences;
  std::vector<double> log_probs;  // sum of per-token log-probabilities
  std::vector<std::vector<double>> per_token_log_probs;
};

// Encoder-decoder captioning model over visual feature sequences. The
// decoder is causal; the output head never emits BOS or PAD. Two forward
// paths exist: an autodiff graph path for training/re-scoring and a
// value-only incremental path (with per-layer key/value caches) for
// decoding. Tests pin both paths to each other.
class Captioner {
 public:
  explicit Captioner(CaptionerConfig cfg);

  // ---- graph (training) path ----
  int encode_graph(nn::Graph& g, const Mat& features) const;
  // input_ids = [BOS, w_1..w_T]; returns logits (T+1) x V aligned so row t
  // predicts the token after input_ids[t].
  int forced_logits_graph(nn::Graph& g, int memory, const std::vector<int>& input_ids) const;
  // Scalar node: sum of log P(target_t) over all steps.
  int sequence_log_prob_graph(nn::Graph& g, int memory, const TokenSequence& seq) const;

  // ---- value (decode) path ----
  Mat encode(const Mat& features) const;  // memory: feature_slots x hidden
  Mat forced_logits(const Mat& memory, const std::vector<int>& input_ids) const;

  // Probability vector over the vocabulary for the next token after
  // `prefix`, recomputed from scratch (no cache).
  Eigen::VectorXd step_distribution(const Mat& memory, const TokenSequence& prefix) const;

  DecodeResult greedy(const Mat& memory) const;
  DecodeResult sample_sequences(const Mat& memory, int n, double temperature, Rng& rng) const;
  // Completed sequences sorted by length-normalized log-probability,
  // ties broken lexicographically on token indices.
  DecodeResult beam_search(const Mat& memory, int beam_size = 5) const;

  // Teacher-forced per-token log-probabilities of seq under the model
  // (temperature applied to the step distributions).
  std::vector<double> rescore(const Mat& memory, const TokenSequence& seq,
                              double temperature = 1.0) const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const CaptionerConfig& config() const { return cfg_; }

 private:
  struct DecodeCache {
    std::vector<Mat> self_k, self_v;    // per decoder layer, grows by one row per step
    std::vector<Mat> cross_k, cross_v;  // per decoder layer, fixed from memory
  };

  struct EncLayer {
    nn::AttentionBlock attn;
    nn::LayerNorm ln1, ln2;
    nn::FeedForward ff;
  };
  struct DecLayer {
    nn::AttentionBlock self_attn, cross_attn;
    nn::LayerNorm ln1, ln2, ln3;
    nn::FeedForward ff;
  };

  DecodeCache make_cache(const Mat& memory) const;
  // Runs one decode step for `token` at position `pos`, appends to the
  // cache, and returns the next-token logits (1 x V, emission-masked).
  Eigen::RowVectorXd step_cached(DecodeCache& cache, int token, int pos) const;

  Mat emission_mask_row() const;  // 1 x V, -inf at BOS and PAD

  CaptionerConfig cfg_;
  nn::ParamStore params_;
  nn::Linear input_proj_;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  nn::Param* tok_emb_ = nullptr;
  nn::Linear head_;
};

}  // namespace caplab
