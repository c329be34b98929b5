#include "caplab/dual_encoder.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "caplab/hash.hpp"
#include "caplab/util.hpp"

namespace caplab {

using nn::Graph;
using nn::Mat;
using nn::Vec;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void DualEncoderConfig::validate() const {
  if (hidden <= 0 || hidden % heads != 0) throw Error("dual encoder: heads must divide hidden");
  if (layers < 1 || embed_dim < 1 || ffn < 1) throw Error("dual encoder: invalid dimensions");
  if (vocab_size < 4) throw Error("dual encoder: vocabulary too small");
  if (!(logit_scale_init > 0.0)) throw Error("dual encoder: logit scale must be positive");
}

std::string DualEncoderConfig::identity_hash() const {
  nlohmann::ordered_json j;
  j["kind"] = "dual_encoder";
  j["layers"] = layers;
  j["hidden"] = hidden;
  j["heads"] = heads;
  j["ffn"] = ffn;
  j["embed_dim"] = embed_dim;
  j["feature_dim"] = feature_dim;
  j["feature_slots"] = feature_slots;
  j["vocab_size"] = vocab_size;
  j["image_pos_encoding"] = image_pos_encoding;
  return sha256_hex(j.dump());
}

DualEncoder::DualEncoder(DualEncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto seed = cfg_.init_seed;
  const Eigen::Index h = cfg_.hidden;

  const auto make_tower = [&](Tower& tower, const std::string& name, Eigen::Index input_dim) {
    if (input_dim > 0) tower.input = nn::make_linear(params_, name + ".input", input_dim, h, seed);
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string p = name + ".layer" + std::to_string(l);
      TowerLayer layer;
      layer.attn = nn::make_attention(params_, p + ".attn", h, cfg_.heads, seed);
      layer.ln1 = nn::make_layer_norm(params_, p + ".ln1", h);
      layer.ln2 = nn::make_layer_norm(params_, p + ".ln2", h);
      layer.ff = nn::make_feed_forward(params_, p + ".ff", h, cfg_.ffn, seed);
      tower.layers.push_back(layer);
    }
    tower.output = nn::make_linear(params_, name + ".output", h, cfg_.embed_dim, seed);
  };

  make_tower(image_, "img", cfg_.feature_dim);
  make_tower(text_, "txt", 0);
  tok_emb_ = &params_.create("txt.tok_emb", cfg_.vocab_size, h);
  nn::init::gaussian(*tok_emb_, seed, 0.02);
  logit_scale_ = &params_.create("logit_scale", 1, 1);
  logit_scale_->value(0, 0) = cfg_.logit_scale_init;
}

void DualEncoder::clamp_logit_scale() {
  double& v = logit_scale_->value(0, 0);
  v = std::min(std::max(v, 1e-3), cfg_.logit_scale_max);
}

int DualEncoder::tower_graph(Graph& g, const Tower& tower, int x, const Mat* mask,
                             const Vec& pool_w) const {
  for (const auto& layer : tower.layers) {
    x = layer.ln1.apply(g, g.add(x, nn::multi_head_attention(g, layer.attn, x, x, mask)));
    x = layer.ln2.apply(g, g.add(x, layer.ff.apply(g, x)));
  }
  int pooled = g.mean_rows_weighted(x, pool_w);
  return g.l2_normalize_rows(tower.output.apply(g, pooled));
}

Mat DualEncoder::tower_value(const Tower& tower, Mat x, const Mat* mask, const Vec& pool_w) const {
  for (const auto& layer : tower.layers) {
    x = layer.ln1.apply_value(x + nn::multi_head_attention_value(layer.attn, x, x, mask));
    x = layer.ln2.apply_value(x + layer.ff.apply_value(x));
  }
  Mat pooled = (pool_w.transpose() * x) / pool_w.sum();
  Mat out = tower.output.apply_value(pooled);
  const double n = out.row(0).norm();
  out.row(0) /= (n + 1e-12);
  return out;
}

int DualEncoder::embed_image_graph(Graph& g, const Mat& features) const {
  if (features.rows() != cfg_.feature_slots || features.cols() != cfg_.feature_dim) {
    throw Error("embed_image: feature shape mismatch with config");
  }
  int x = image_.input.apply(g, g.input(features));
  if (cfg_.image_pos_encoding) {
    x = g.add(x, g.input(nn::sinusoidal_positions(features.rows(), cfg_.hidden)));
  }
  return tower_graph(g, image_, x, nullptr, Vec::Ones(features.rows()));
}

namespace {

// PAD carries no content: it is masked out of attention keys and pooling,
// which is what makes text embeddings invariant to padding length.
struct TextMasks {
  Mat attn;   // additive T x T
  Vec pool;   // T
  bool any_content = false;
};

TextMasks text_masks(const std::vector<int>& ids) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  TextMasks m;
  m.attn = Mat::Zero(n, n);
  m.pool = Vec::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (ids[static_cast<std::size_t>(j)] == Vocabulary::kPad) {
      m.attn.col(j).setConstant(kNegInf);
    } else {
      m.pool(j) = 1.0;
      m.any_content = true;
    }
  }
  return m;
}

std::vector<int> effective_text_ids(const std::vector<int>& token_ids) {
  // An empty caption embeds as a lone EOS: degenerate but well-defined,
  // so scoring never aborts on it.
  if (token_ids.empty()) return {Vocabulary::kEos};
  return token_ids;
}

}  // namespace

int DualEncoder::embed_text_graph(Graph& g, const std::vector<int>& token_ids) const {
  const std::vector<int> ids = effective_text_ids(token_ids);
  for (int id : ids) {
    if (id < 0 || id >= cfg_.vocab_size) throw Error("embed_text: token id out of vocabulary");
  }
  const TextMasks masks = text_masks(ids);
  if (!masks.any_content) throw Error("embed_text: caption has no content tokens");
  const double emb_scale = std::sqrt(static_cast<double>(cfg_.hidden));
  int x = g.scale(g.gather_rows(*tok_emb_, ids), emb_scale);
  x = g.add(x, g.input(nn::sinusoidal_positions(static_cast<Eigen::Index>(ids.size()), cfg_.hidden)));
  return tower_graph(g, text_, x, &masks.attn, masks.pool);
}

Eigen::RowVectorXd DualEncoder::embed_image(const Mat& features) const {
  if (features.rows() != cfg_.feature_slots || features.cols() != cfg_.feature_dim) {
    throw Error("embed_image: feature shape mismatch with config");
  }
  Mat x = image_.input.apply_value(features);
  if (cfg_.image_pos_encoding) {
    x += nn::sinusoidal_positions(features.rows(), cfg_.hidden);
  }
  return tower_value(image_, std::move(x), nullptr, Vec::Ones(features.rows())).row(0);
}

Eigen::RowVectorXd DualEncoder::embed_text(const std::vector<int>& token_ids) const {
  const std::vector<int> ids = effective_text_ids(token_ids);
  for (int id : ids) {
    if (id < 0 || id >= cfg_.vocab_size) throw Error("embed_text: token id out of vocabulary");
  }
  const TextMasks masks = text_masks(ids);
  if (!masks.any_content) throw Error("embed_text: caption has no content tokens");
  const double emb_scale = std::sqrt(static_cast<double>(cfg_.hidden));
  Mat x(static_cast<Eigen::Index>(ids.size()), cfg_.hidden);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    x.row(static_cast<Eigen::Index>(t)) = tok_emb_->value.row(ids[t]) * emb_scale;
  }
  x += nn::sinusoidal_positions(static_cast<Eigen::Index>(ids.size()), cfg_.hidden);
  return tower_value(text_, std::move(x), &masks.attn, masks.pool).row(0);
}

Mat DualEncoder::embed_images(const std::vector<const Mat*>& features) const {
  if (features.empty()) throw Error("embed_images: empty batch");
  Mat out(static_cast<Eigen::Index>(features.size()), cfg_.embed_dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = embed_image(*features[i]);
  }
  return out;
}

Mat DualEncoder::embed_texts(const std::vector<std::vector<int>>& token_ids) const {
  if (token_ids.empty()) throw Error("embed_texts: empty batch");
  Mat out(static_cast<Eigen::Index>(token_ids.size()), cfg_.embed_dim);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = embed_text(token_ids[i]);
  }
  return out;
}

std::vector<nn::Linear*> DualEncoder::all_linears() {
  std::vector<nn::Linear*> out;
  const auto add_tower = [&](Tower& t, bool has_input) {
    if (has_input) out.push_back(&t.input);
    for (auto& layer : t.layers) {
      out.push_back(&layer.attn.q);
      out.push_back(&layer.attn.k);
      out.push_back(&layer.attn.v);
      out.push_back(&layer.attn.o);
      out.push_back(&layer.ff.up);
      out.push_back(&layer.ff.down);
    }
    out.push_back(&t.output);
  };
  add_tower(image_, true);
  add_tower(text_, false);
  return out;
}

std::vector<const nn::Linear*> DualEncoder::all_linears() const {
  auto mutable_this = const_cast<DualEncoder*>(this);
  auto linears = mutable_this->all_linears();
  return {linears.begin(), linears.end()};
}

void DualEncoder::inject_lora(int rank, double alpha) {
  if (lora_injected_) throw Error("lora already injected");
  if (rank < 1) throw Error("lora rank must be >= 1");
  auto linears = all_linears();
  for (nn::Linear* l : linears) {
    const Eigen::Index out = l->W->rows(), in = l->W->cols();
    if (rank > std::min(out, in)) {
      throw Error("lora rank " + std::to_string(rank) + " exceeds min dimension of " + l->W->name);
    }
  }
  // Freeze the base model; only adapters and the logit scale train.
  for (nn::Param* p : params_.all()) p->trainable = (p == logit_scale_);
  for (nn::Linear* l : linears) {
    nn::LoraAdapter ad;
    ad.A = &params_.create(l->W->name + ".lora_A", rank, l->W->cols());
    ad.B = &params_.create(l->W->name + ".lora_B", l->W->rows(), rank);
    nn::init::gaussian(*ad.A, cfg_.init_seed ^ 0x10adULL, 1.0 / std::sqrt(static_cast<double>(rank)));
    nn::init::constant(*ad.B, 0.0);  // adapted forward starts exactly at the base model
    ad.scaling = alpha / static_cast<double>(rank);
    l->lora = ad;
  }
  lora_injected_ = true;
}

void DualEncoder::merge_lora() {
  if (!lora_injected_) throw Error("no lora adapters to merge");
  for (nn::Linear* l : all_linears()) {
    if (!l->lora) continue;
    l->W->value += l->lora->scaling * (l->lora->B->value * l->lora->A->value);
    params_.erase(l->lora->A->name);
    params_.erase(l->lora->B->name);
    l->lora.reset();
  }
  for (nn::Param* p : params_.all()) p->trainable = true;
  lora_injected_ = false;
}

std::vector<std::string> DualEncoder::lora_param_names() const {
  std::vector<std::string> names;
  for (const nn::Param* p : params_.all()) {
    if (p->name.find(".lora_") != std::string::npos) names.push_back(p->name);
  }
  return names;
}

std::string DualEncoder::base_weights_hash() const {
  std::string bytes;
  for (const nn::Param* p : params_.all()) {
    if (p->name.find(".lora_") != std::string::npos || p->name == "logit_scale") continue;
    bytes += p->name;
    bytes.append(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return sha256_hex(bytes);
}

Mat similarity(const Mat& T, const Mat& V) {
  if (T.cols() != V.cols()) throw Error("similarity: embedding dimension mismatch");
  return T * V.transpose();
}

double clip_contrastive_loss(const Mat& S, double logit_scale) {
  if (S.rows() != S.cols()) throw Error("clip_contrastive_loss: similarity matrix must be square");
  const auto n = S.rows();
  const Mat logits = logit_scale * S;
  double row_term = 0.0, col_term = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd r = logits.row(i);
    const double mr = r.maxCoeff();
    row_term += mr + std::log((r.array() - mr).exp().sum()) - r(i);
    const Eigen::VectorXd c = logits.col(i);
    const double mc = c.maxCoeff();
    col_term += mc + std::log((c.array() - mc).exp().sum()) - c(i);
  }
  const double dn = static_cast<double>(n);
  return 0.5 * (row_term / dn + col_term / dn);
}

int clip_contrastive_loss_graph(Graph& g, int S, int logit_scale) {
  const Mat& s = g.value(S);
  if (s.rows() != s.cols()) throw Error("clip_contrastive_loss: similarity matrix must be square");
  std::vector<int> diag(static_cast<std::size_t>(s.rows()));
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = static_cast<int>(i);
  const int logits = g.mul_scalar(S, logit_scale);
  const int row_term = g.cross_entropy_rows(logits, diag);
  const int col_term = g.cross_entropy_rows(g.transpose(logits), diag);
  return g.combine({row_term, col_term}, Vec::Constant(2, 0.5));
}

double reward_score(const DualEncoder& encoder, const Mat& features,
                    const std::vector<int>& caption_ids, double w) {
  if (!(w > 0.0)) throw Error("reward_score: w must be > 0");
  const double cos = encoder.embed_image(features).dot(encoder.embed_text(caption_ids));
  return w * std::max(0.0, cos);
}

}  // namespace caplab
