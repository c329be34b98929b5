#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caplab/nn/layers.hpp"
#include "caplab/vocab.hpp"

namespace caplab {

using Mat = Eigen::MatrixXd;

struct DualEncoderConfig {
  int layers = 2;
  int hidden = 128;
  int heads = 4;
  int ffn = 512;
  int embed_dim = 128;  // D
  int feature_dim = 256;
  int feature_slots = 16;
  int vocab_size = 0;
  bool image_pos_encoding = true;
  double logit_scale_init = 1.0 / 0.07;
  double logit_scale_max = 100.0;
  std::uint64_t init_seed = 2;

  void validate() const;
  std::string identity_hash() const;
};

// Two small transformer towers with mean pooling and a projection to a
// shared D-dimensional space; both towers emit unit-norm rows. The text
// tower masks PAD both in attention and in pooling, so embeddings are
// invariant to padding length.
class DualEncoder {
 public:
  explicit DualEncoder(DualEncoderConfig cfg);

  // ---- graph (training) path; each returns a 1 x D unit-norm row ----
  int embed_image_graph(nn::Graph& g, const Mat& features) const;
  int embed_text_graph(nn::Graph& g, const std::vector<int>& token_ids) const;

  // ---- value (scoring) path ----
  Eigen::RowVectorXd embed_image(const Mat& features) const;
  Eigen::RowVectorXd embed_text(const std::vector<int>& token_ids) const;
  Mat embed_images(const std::vector<const Mat*>& features) const;           // N x D
  Mat embed_texts(const std::vector<std::vector<int>>& token_ids) const;     // N x D

  double logit_scale() const { return logit_scale_->value(0, 0); }
  nn::Param& logit_scale_param() { return *logit_scale_; }
  void clamp_logit_scale();

  // ---- low-rank adaptation over every linear map in both towers ----
  void inject_lora(int rank, double alpha);
  bool has_lora() const { return lora_injected_; }
  void merge_lora();  // fold adapters into base weights and drop them
  std::vector<std::string> lora_param_names() const;
  // Hash over non-adapter parameters; fine-tuning must keep it fixed.
  std::string base_weights_hash() const;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const DualEncoderConfig& config() const { return cfg_; }

 private:
  struct TowerLayer {
    nn::AttentionBlock attn;
    nn::LayerNorm ln1, ln2;
    nn::FeedForward ff;
  };
  struct Tower {
    nn::Linear input;  // image: feature proj; text: unused (embedding table)
    std::vector<TowerLayer> layers;
    nn::Linear output;  // hidden -> D
  };

  int tower_graph(nn::Graph& g, const Tower& tower, int x, const Mat* mask,
                  const nn::Vec& pool_w) const;
  Mat tower_value(const Tower& tower, Mat x, const Mat* mask, const nn::Vec& pool_w) const;
  std::vector<nn::Linear*> all_linears();
  std::vector<const nn::Linear*> all_linears() const;

  DualEncoderConfig cfg_;
  nn::ParamStore params_;
  Tower image_, text_;
  nn::Param* tok_emb_ = nullptr;
  nn::Param* logit_scale_ = nullptr;
  bool lora_injected_ = false;
};

// Cosine similarities between unit-norm embedding rows: S = T V^T
// (rows of S index texts, columns index images).
Mat similarity(const Mat& T, const Mat& V);

// Symmetric InfoNCE over a square paired batch: mean of row-wise and
// column-wise cross-entropy against the diagonal, logits = scale * S.
double clip_contrastive_loss(const Mat& S, double logit_scale);
int clip_contrastive_loss_graph(nn::Graph& g, int S, int logit_scale);

// w * max(0, cos(image, text)).
double reward_score(const DualEncoder& encoder, const Mat& features,
                    const std::vector<int>& caption_ids, double w);

}  // namespace caplab
