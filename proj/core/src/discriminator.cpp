#include "caplab/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "caplab/nn/optim.hpp"
#include "caplab/rng.hpp"
#include "caplab/util.hpp"

namespace caplab {

using nn::Graph;
using nn::Vec;

AugmentedBatch AugmentedBatch::assemble(const Dataset& dataset, const std::vector<int>& scene_ids,
                                        const std::map<int, NegativeSet>& negatives,
                                        const std::vector<int>& positive_ref_choice) {
  if (positive_ref_choice.size() != scene_ids.size()) {
    throw Error("augmented batch: one reference choice per scene required");
  }
  AugmentedBatch batch;
  for (std::size_t i = 0; i < scene_ids.size(); ++i) {
    const SceneInstance& scene = dataset.scene_by_id(scene_ids[i]);
    batch.images.push_back(&scene.features);
    const int choice = positive_ref_choice[i];
    if (choice < 0 || choice >= static_cast<int>(scene.references.size())) {
      throw Error("augmented batch: reference choice out of range");
    }
    batch.texts.push_back(scene.references[static_cast<std::size_t>(choice)].content_ids());
  }
  for (int id : scene_ids) {
    const auto it = negatives.find(id);
    if (it == negatives.end()) {
      throw Error("missing negatives for scene " + std::to_string(id) +
                  "; run mine-negatives over every training scene first");
    }
    batch.texts.push_back(it->second.z1.content_ids());
    batch.texts.push_back(it->second.z2.content_ids());
  }
  batch.validate();
  return batch;
}

void AugmentedBatch::validate() const {
  if (images.empty() || texts.size() != 3 * images.size()) {
    throw Error("augmented batch: |texts| must equal 3 * |images|");
  }
}

Mat extended_similarity(const AugmentedBatch& batch, const DualEncoder& encoder) {
  batch.validate();
  const Mat V = encoder.embed_images(batch.images);  // N x D
  const Mat T = encoder.embed_texts(batch.texts);    // 3N x D
  return V * T.transpose();                          // rows = images, cols = texts
}

int extended_similarity_graph(Graph& g, const AugmentedBatch& batch, const DualEncoder& encoder) {
  batch.validate();
  std::vector<int> image_rows, text_rows;
  for (const Mat* features : batch.images) {
    image_rows.push_back(encoder.embed_image_graph(g, *features));
  }
  for (const auto& ids : batch.texts) {
    text_rows.push_back(encoder.embed_text_graph(g, ids));
  }
  const int V = g.vstack(image_rows);
  const int T = g.vstack(text_rows);
  return g.matmul(V, g.transpose(T));
}

namespace {

double cross_entropy_at(const Eigen::RowVectorXd& logits, Eigen::Index target) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits(target);
}

void check_extended_shape(const Mat& S) {
  if (S.rows() == 0 || S.cols() != 3 * S.rows()) {
    throw Error("masked_contrastive_loss: matrix must be N x 3N");
  }
}

}  // namespace

double masked_contrastive_loss(const Mat& S, double logit_scale) {
  check_extended_shape(S);
  const Eigen::Index n = S.rows();
  const Mat logits = logit_scale * S;
  double row_term = 0.0, col_term = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    row_term += cross_entropy_at(logits.row(i), i);
    col_term += cross_entropy_at(logits.col(i).transpose(), i);
  }
  const double dn = static_cast<double>(n);
  return 0.5 * (row_term / dn + col_term / dn);
}

double masked_loss_column_term(const Mat& S, double logit_scale) {
  check_extended_shape(S);
  const Eigen::Index n = S.rows();
  const Mat logits = logit_scale * S;
  double col_term = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    col_term += cross_entropy_at(logits.col(i).transpose(), i);
  }
  return col_term / static_cast<double>(n);
}

int masked_contrastive_loss_graph(Graph& g, int S, int logit_scale) {
  check_extended_shape(g.value(S));
  const auto n = static_cast<int>(g.value(S).rows());
  std::vector<int> diag(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] = i;
  const int logits = g.mul_scalar(S, logit_scale);
  const int row_term = g.cross_entropy_rows(logits, diag);
  // Only the N positive columns carry a loss; the negative columns have
  // no matching image.
  const int pos_cols = g.slice_rows(g.transpose(logits), 0, n);
  const int col_term = g.cross_entropy_rows(pos_cols, diag);
  return g.combine({row_term, col_term}, Vec::Constant(2, 0.5));
}

double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) throw Error("roc_auc: empty score set");
  double wins = 0.0;
  for (double p : positives) {
    for (double q : negatives) {
      if (p > q) {
        wins += 1.0;
      } else if (p == q) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

namespace {

struct HeldoutEval {
  double margin;
  double auc;
};

// Margin: mean of S_ii - max over negative columns of row i.
// AUC: positives (image_i, T_i) vs. that image's own mined negatives.
HeldoutEval evaluate_heldout(const DualEncoder& encoder, const Dataset& dataset,
                             const std::map<int, NegativeSet>& negatives,
                             const std::vector<int>& ids) {
  AugmentedBatch batch = AugmentedBatch::assemble(dataset, ids, negatives,
                                                  std::vector<int>(ids.size(), 0));
  const Mat S = extended_similarity(batch, encoder);
  const Eigen::Index n = S.rows();
  double margin = 0.0;
  std::vector<double> pos, neg;
  for (Eigen::Index i = 0; i < n; ++i) {
    double max_neg = -1.0;
    for (Eigen::Index j = n; j < S.cols(); ++j) max_neg = std::max(max_neg, S(i, j));
    margin += S(i, i) - max_neg;
    pos.push_back(S(i, i));
    neg.push_back(S(i, n + 2 * i));
    neg.push_back(S(i, n + 2 * i + 1));
  }
  return {margin / static_cast<double>(n), roc_auc(pos, neg)};
}

}  // namespace

DiscFinetuneResult finetune_discriminator(DualEncoder& encoder, const Dataset& dataset,
                                          const std::map<int, NegativeSet>& negatives,
                                          const std::vector<int>& train_ids,
                                          const std::vector<int>& heldout_ids,
                                          const DiscFinetuneConfig& config) {
  for (int id : train_ids) {
    if (!negatives.count(id)) {
      throw Error("finetune_discriminator: missing negatives for training scene " +
                  std::to_string(id));
    }
  }
  if (heldout_ids.empty()) throw Error("finetune_discriminator: empty held-out set");

  encoder.inject_lora(config.lora_rank, config.lora_alpha);

  DiscFinetuneResult result;
  result.base_hash_before = encoder.base_weights_hash();
  {
    const HeldoutEval ev = evaluate_heldout(encoder, dataset, negatives, heldout_ids);
    result.initial_margin = ev.margin;
    result.curve.push_back({0, 0.0, ev.margin, ev.auc});
  }

  nn::Adam::Options opts;
  opts.weight_decay = config.weight_decay;
  nn::Adam optimizer(encoder.params().trainable(), opts);

  const int batch_size = std::min<int>(config.batch, static_cast<int>(train_ids.size()));
  for (long step = 1; step <= config.steps; ++step) {
    Rng batch_rng = substream(config.seed, "disc-batch", static_cast<std::uint64_t>(step));
    std::vector<int> ids = train_ids;
    batch_rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(batch_size));
    std::vector<int> ref_choice(ids.size());
    for (auto& c : ref_choice) c = static_cast<int>(batch_rng.below(kReferencesPerScene));

    const AugmentedBatch batch = AugmentedBatch::assemble(dataset, ids, negatives, ref_choice);
    Graph g;
    const int S = extended_similarity_graph(g, batch, encoder);
    const int loss = masked_contrastive_loss_graph(g, S, g.param(encoder.logit_scale_param()));
    const double loss_value = g.scalar(loss);
    if (!std::isfinite(loss_value)) {
      throw Error("finetune_discriminator: loss diverged at step " + std::to_string(step));
    }
    g.backward(loss);
    optimizer.step(config.lr, g.param_grads());
    encoder.clamp_logit_scale();

    if (step % config.eval_interval == 0 || step == config.steps) {
      const HeldoutEval ev = evaluate_heldout(encoder, dataset, negatives, heldout_ids);
      result.curve.push_back({step, loss_value, ev.margin, ev.auc});
    }
  }

  result.final_margin = result.curve.back().margin;
  result.final_auc = result.curve.back().auc;
  result.base_hash_after = encoder.base_weights_hash();
  if (result.base_hash_before != result.base_hash_after) {
    throw Error("finetune_discriminator: frozen base weights changed");
  }

  if (!config.curve_csv.empty()) {
    std::ostringstream csv;
    csv << "step,loss,margin,auc\n";
    for (const auto& p : result.curve) {
      csv << p.step << "," << p.loss << "," << p.margin << "," << p.auc << "\n";
    }
    write_file(config.curve_csv, csv.str());
  }
  return result;
}

}  // namespace caplab
