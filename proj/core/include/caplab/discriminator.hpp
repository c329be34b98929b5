#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "caplab/data.hpp"
#include "caplab/dual_encoder.hpp"
#include "caplab/negatives.hpp"

namespace caplab {

// N images with 3N texts: the N positives first, then the per-scene
// negative pairs in scene order [T_1..T_N, Z_1^1, Z_1^2, ..., Z_N^1, Z_N^2].
struct AugmentedBatch {
  std::vector<const Mat*> images;         // N feature matrices
  std::vector<std::vector<int>> texts;    // 3N content-token lists

  static AugmentedBatch assemble(const Dataset& dataset, const std::vector<int>& scene_ids,
                                 const std::map<int, NegativeSet>& negatives,
                                 const std::vector<int>& positive_ref_choice);
  void validate() const;
  Eigen::Index n_images() const { return static_cast<Eigen::Index>(images.size()); }
};

// S[i][j] = cosine(image_i, text_j); rows are images, columns texts.
Mat extended_similarity(const AugmentedBatch& batch, const DualEncoder& encoder);
int extended_similarity_graph(nn::Graph& g, const AugmentedBatch& batch,
                              const DualEncoder& encoder);

// loss = 1/2 (row_term + col_term); the row term is a cross-entropy over
// all 3N texts per image, the column term only covers the N positive
// columns — negatives have no matching image, so their columns carry no
// loss.
double masked_contrastive_loss(const Mat& S, double logit_scale);
int masked_contrastive_loss_graph(nn::Graph& g, int S, int logit_scale);
// Column term alone (mean CE over positive columns); used to verify that
// perturbing negative columns never leaks into it.
double masked_loss_column_term(const Mat& S, double logit_scale);

// Mann-Whitney AUC with ties counted 1/2.
double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

struct DiscFinetuneConfig {
  long steps = 1200;
  int batch = 16;
  double lr = 1e-4;
  double weight_decay = 0.01;
  long eval_interval = 100;
  int lora_rank = 8;
  double lora_alpha = 16.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path curve_csv;  // optional (step, loss, margin, auc)
};

struct DiscCurvePoint {
  long step;
  double loss;
  double margin;
  double auc;
};

struct DiscFinetuneResult {
  std::vector<DiscCurvePoint> curve;
  double initial_margin = 0.0;
  double final_margin = 0.0;
  double final_auc = 0.0;
  std::string base_hash_before;
  std::string base_hash_after;
};

// LoRA fine-tuning of the dual encoder into the discriminator. Injects
// adapters (base weights frozen), trains adapters plus logit_scale with
// AdamW on the masked objective, and evaluates margin/AUC on held-out
// scenes. The encoder is left with adapters injected; callers merge or
// save them as needed.
DiscFinetuneResult finetune_discriminator(DualEncoder& encoder, const Dataset& dataset,
                                          const std::map<int, NegativeSet>& negatives,
                                          const std::vector<int>& train_ids,
                                          const std::vector<int>& heldout_ids,
                                          const DiscFinetuneConfig& config);

}  // namespace caplab
