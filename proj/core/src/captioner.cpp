#include "caplab/captioner.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "caplab/hash.hpp"
#include "caplab/util.hpp"

namespace caplab {

using nn::Graph;
using nn::Mat;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Mat causal_mask(Eigen::Index n) {
  Mat m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = kNegInf;
  }
  return m;
}

Eigen::RowVectorXd log_softmax_row(const Eigen::RowVectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

void CaptionerConfig::validate() const {
  if (hidden <= 0 || hidden % heads != 0) throw Error("captioner: heads must divide hidden size");
  if (enc_layers < 1 || dec_layers < 1) throw Error("captioner: needs at least one layer per stack");
  if (vocab_size < 4) throw Error("captioner: vocabulary too small");
  if (max_len < 1 || feature_slots < 1 || feature_dim < 1 || ffn < 1) {
    throw Error("captioner: invalid dimensions");
  }
}

std::string CaptionerConfig::identity_hash() const {
  nlohmann::ordered_json j;
  j["kind"] = "captioner";
  j["enc_layers"] = enc_layers;
  j["dec_layers"] = dec_layers;
  j["hidden"] = hidden;
  j["heads"] = heads;
  j["ffn"] = ffn;
  j["feature_dim"] = feature_dim;
  j["feature_slots"] = feature_slots;
  j["vocab_size"] = vocab_size;
  j["max_len"] = max_len;
  j["feature_pos_encoding"] = feature_pos_encoding;
  return sha256_hex(j.dump());
}

Captioner::Captioner(CaptionerConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto seed = cfg_.init_seed;
  const Eigen::Index h = cfg_.hidden;

  input_proj_ = nn::make_linear(params_, "enc.input", cfg_.feature_dim, h, seed);
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string p = "enc.layer" + std::to_string(l);
    EncLayer layer;
    layer.attn = nn::make_attention(params_, p + ".attn", h, cfg_.heads, seed);
    layer.ln1 = nn::make_layer_norm(params_, p + ".ln1", h);
    layer.ln2 = nn::make_layer_norm(params_, p + ".ln2", h);
    layer.ff = nn::make_feed_forward(params_, p + ".ff", h, cfg_.ffn, seed);
    enc_.push_back(layer);
  }

  tok_emb_ = &params_.create("dec.tok_emb", cfg_.vocab_size, h);
  nn::init::gaussian(*tok_emb_, seed, 0.02);
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string p = "dec.layer" + std::to_string(l);
    DecLayer layer;
    layer.self_attn = nn::make_attention(params_, p + ".self", h, cfg_.heads, seed);
    layer.cross_attn = nn::make_attention(params_, p + ".cross", h, cfg_.heads, seed);
    layer.ln1 = nn::make_layer_norm(params_, p + ".ln1", h);
    layer.ln2 = nn::make_layer_norm(params_, p + ".ln2", h);
    layer.ln3 = nn::make_layer_norm(params_, p + ".ln3", h);
    layer.ff = nn::make_feed_forward(params_, p + ".ff", h, cfg_.ffn, seed);
    dec_.push_back(layer);
  }
  head_ = nn::make_linear(params_, "dec.head", h, cfg_.vocab_size, seed);
}

Mat Captioner::emission_mask_row() const {
  Mat m = Mat::Zero(1, cfg_.vocab_size);
  m(0, Vocabulary::kBos) = kNegInf;
  m(0, Vocabulary::kPad) = kNegInf;
  return m;
}

// ---------------------------------------------------------------------------
// Graph path
// ---------------------------------------------------------------------------

int Captioner::encode_graph(Graph& g, const Mat& features) const {
  if (features.rows() != cfg_.feature_slots || features.cols() != cfg_.feature_dim) {
    throw Error("encode: feature shape mismatch with config");
  }
  int x = input_proj_.apply(g, g.input(features));
  if (cfg_.feature_pos_encoding) {
    x = g.add(x, g.input(nn::sinusoidal_positions(features.rows(), cfg_.hidden)));
  }
  for (const auto& layer : enc_) {
    x = layer.ln1.apply(g, g.add(x, nn::multi_head_attention(g, layer.attn, x, x)));
    x = layer.ln2.apply(g, g.add(x, layer.ff.apply(g, x)));
  }
  return x;
}

int Captioner::forced_logits_graph(Graph& g, int memory, const std::vector<int>& input_ids) const {
  if (input_ids.empty()) throw Error("decode: empty input");
  for (int id : input_ids) {
    if (id < 0 || id >= cfg_.vocab_size) throw Error("decode: token id out of vocabulary");
  }
  const auto n = static_cast<Eigen::Index>(input_ids.size());
  const double emb_scale = std::sqrt(static_cast<double>(cfg_.hidden));
  int x = g.scale(g.gather_rows(*tok_emb_, input_ids), emb_scale);
  x = g.add(x, g.input(nn::sinusoidal_positions(n, cfg_.hidden)));
  const Mat mask = causal_mask(n);
  for (const auto& layer : dec_) {
    x = layer.ln1.apply(g, g.add(x, nn::multi_head_attention(g, layer.self_attn, x, x, &mask)));
    x = layer.ln2.apply(g, g.add(x, nn::multi_head_attention(g, layer.cross_attn, x, memory)));
    x = layer.ln3.apply(g, g.add(x, layer.ff.apply(g, x)));
  }
  int logits = head_.apply(g, x);
  return g.add_rowvec(logits, g.input(emission_mask_row()));
}

int Captioner::sequence_log_prob_graph(Graph& g, int memory, const TokenSequence& seq) const {
  const std::vector<int> content = seq.content_ids();
  std::vector<int> input = {Vocabulary::kBos};
  input.insert(input.end(), content.begin(), content.end());
  std::vector<int> targets = content;
  if (seq.complete()) targets.push_back(Vocabulary::kEos);
  if (targets.empty()) throw Error("cannot score an empty sequence");
  int logits = forced_logits_graph(g, memory, input);
  logits = g.slice_rows(logits, 0, static_cast<int>(targets.size()));
  return g.sum_all(g.picked_log_probs(logits, targets));
}

// ---------------------------------------------------------------------------
// Value path
// ---------------------------------------------------------------------------

Mat Captioner::encode(const Mat& features) const {
  if (features.rows() != cfg_.feature_slots || features.cols() != cfg_.feature_dim) {
    throw Error("encode: feature shape mismatch with config");
  }
  Mat x = input_proj_.apply_value(features);
  if (cfg_.feature_pos_encoding) {
    x += nn::sinusoidal_positions(features.rows(), cfg_.hidden);
  }
  for (const auto& layer : enc_) {
    x = layer.ln1.apply_value(x + nn::multi_head_attention_value(layer.attn, x, x));
    x = layer.ln2.apply_value(x + layer.ff.apply_value(x));
  }
  return x;
}

Mat Captioner::forced_logits(const Mat& memory, const std::vector<int>& input_ids) const {
  if (input_ids.empty()) throw Error("decode: empty input");
  const auto n = static_cast<Eigen::Index>(input_ids.size());
  const double emb_scale = std::sqrt(static_cast<double>(cfg_.hidden));
  Mat x(n, cfg_.hidden);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int id = input_ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= cfg_.vocab_size) throw Error("decode: token id out of vocabulary");
    x.row(t) = tok_emb_->value.row(id) * emb_scale;
  }
  x += nn::sinusoidal_positions(n, cfg_.hidden);
  const Mat mask = causal_mask(n);
  for (const auto& layer : dec_) {
    x = layer.ln1.apply_value(x + nn::multi_head_attention_value(layer.self_attn, x, x, &mask));
    x = layer.ln2.apply_value(x + nn::multi_head_attention_value(layer.cross_attn, x, memory));
    x = layer.ln3.apply_value(x + layer.ff.apply_value(x));
  }
  Mat logits = head_.apply_value(x);
  logits.rowwise() += emission_mask_row().row(0);
  return logits;
}

Eigen::VectorXd Captioner::step_distribution(const Mat& memory, const TokenSequence& prefix) const {
  if (prefix.ids.empty() || prefix.ids.front() != Vocabulary::kBos) {
    throw Error("step_distribution: prefix must begin with BOS");
  }
  const Mat logits = forced_logits(memory, prefix.ids);
  const Eigen::RowVectorXd last = logits.row(logits.rows() - 1);
  const double m = last.maxCoeff();
  Eigen::ArrayXd e = (last.array() - m).exp();
  return (e / e.sum()).matrix();
}

Captioner::DecodeCache Captioner::make_cache(const Mat& memory) const {
  DecodeCache cache;
  cache.self_k.resize(dec_.size());
  cache.self_v.resize(dec_.size());
  cache.cross_k.reserve(dec_.size());
  cache.cross_v.reserve(dec_.size());
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    cache.self_k[l] = Mat(0, cfg_.hidden);
    cache.self_v[l] = Mat(0, cfg_.hidden);
    cache.cross_k.push_back(dec_[l].cross_attn.k.apply_value(memory));
    cache.cross_v.push_back(dec_[l].cross_attn.v.apply_value(memory));
  }
  return cache;
}

Eigen::RowVectorXd Captioner::step_cached(DecodeCache& cache, int token, int pos) const {
  const double emb_scale = std::sqrt(static_cast<double>(cfg_.hidden));
  Mat x = tok_emb_->value.row(token) * emb_scale;
  x += nn::sinusoidal_positions(1, cfg_.hidden, pos);
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    const auto& layer = dec_[l];
    Mat& K = cache.self_k[l];
    Mat& V = cache.self_v[l];
    const Eigen::Index t = K.rows();
    K.conservativeResize(t + 1, Eigen::NoChange);
    V.conservativeResize(t + 1, Eigen::NoChange);
    K.row(t) = layer.self_attn.k.apply_value(x).row(0);
    V.row(t) = layer.self_attn.v.apply_value(x).row(0);
    x = layer.ln1.apply_value(x + nn::multi_head_attention_cached(layer.self_attn, x, K, V));
    x = layer.ln2.apply_value(
        x + nn::multi_head_attention_cached(layer.cross_attn, x, cache.cross_k[l], cache.cross_v[l]));
    x = layer.ln3.apply_value(x + layer.ff.apply_value(x));
  }
  Eigen::RowVectorXd logits = head_.apply_value(x).row(0);
  logits += emission_mask_row().row(0);
  return logits;
}

DecodeResult Captioner::greedy(const Mat& memory) const {
  DecodeCache cache = make_cache(memory);
  std::vector<int> content;
  std::vector<double> token_logps;
  bool terminated = false;
  Eigen::RowVectorXd logits = step_cached(cache, Vocabulary::kBos, 0);
  for (int step = 1; step <= cfg_.max_len; ++step) {
    const Eigen::RowVectorXd lsm = log_softmax_row(logits);
    Eigen::Index best = 0;
    lsm.maxCoeff(&best);
    token_logps.push_back(lsm(best));
    if (best == Vocabulary::kEos) {
      terminated = true;
      break;
    }
    content.push_back(static_cast<int>(best));
    if (step < cfg_.max_len) logits = step_cached(cache, static_cast<int>(best), step);
  }
  DecodeResult out;
  TokenSequence seq;
  seq.ids = {Vocabulary::kBos};
  seq.ids.insert(seq.ids.end(), content.begin(), content.end());
  if (terminated) seq.ids.push_back(Vocabulary::kEos);
  out.sequences.push_back(std::move(seq));
  out.per_token_log_probs.push_back(token_logps);
  double total = 0.0;
  for (double lp : token_logps) total += lp;
  out.log_probs.push_back(total);
  return out;
}

DecodeResult Captioner::sample_sequences(const Mat& memory, int n, double temperature,
                                         Rng& rng) const {
  if (n < 1) throw Error("sample_sequences: n must be >= 1");
  if (!(temperature > 0.0)) throw Error("sample_sequences: temperature must be > 0");
  DecodeResult out;
  for (int s = 0; s < n; ++s) {
    DecodeCache cache = make_cache(memory);
    std::vector<int> content;
    std::vector<double> token_logps;
    bool terminated = false;
    Eigen::RowVectorXd logits = step_cached(cache, Vocabulary::kBos, 0);
    for (int step = 1; step <= cfg_.max_len; ++step) {
      const Eigen::RowVectorXd lsm = log_softmax_row(logits / temperature);
      const Eigen::RowVectorXd probs = lsm.array().exp();
      const double u = rng.uniform();
      double acc = 0.0;
      int tok = cfg_.vocab_size - 1;
      for (int k = 0; k < cfg_.vocab_size; ++k) {
        acc += probs(k);
        if (u < acc) {
          tok = k;
          break;
        }
      }
      token_logps.push_back(lsm(tok));
      if (tok == Vocabulary::kEos) {
        terminated = true;
        break;
      }
      content.push_back(tok);
      if (step < cfg_.max_len) logits = step_cached(cache, tok, step);
    }
    TokenSequence seq;
    seq.ids = {Vocabulary::kBos};
    seq.ids.insert(seq.ids.end(), content.begin(), content.end());
    if (terminated) seq.ids.push_back(Vocabulary::kEos);
    out.sequences.push_back(std::move(seq));
    double total = 0.0;
    for (double lp : token_logps) total += lp;
    out.log_probs.push_back(total);
    out.per_token_log_probs.push_back(std::move(token_logps));
  }
  return out;
}

DecodeResult Captioner::beam_search(const Mat& memory, int beam_size) const {
  if (beam_size < 1) throw Error("beam_search: beam_size must be >= 1");

  struct Beam {
    std::vector<int> content;
    double logp = 0.0;
    std::vector<double> token_logps;
    DecodeCache cache;
    Eigen::RowVectorXd next_logits;
  };
  struct Finished {
    std::vector<int> content;
    bool terminated = false;
    double logp = 0.0;
    std::vector<double> token_logps;

    double normalized() const {
      const auto n = static_cast<double>(token_logps.size());
      return n > 0 ? logp / n : -std::numeric_limits<double>::infinity();
    }
    std::vector<int> ranked_ids() const {
      std::vector<int> ids = content;
      if (terminated) ids.push_back(Vocabulary::kEos);
      return ids;
    }
  };

  std::vector<Beam> alive(1);
  alive[0].cache = make_cache(memory);
  alive[0].next_logits = step_cached(alive[0].cache, Vocabulary::kBos, 0);
  std::vector<Finished> finished;

  for (int step = 1; step <= cfg_.max_len && !alive.empty(); ++step) {
    struct Cand {
      std::size_t parent;
      int token;
      double total;
      double token_logp;
    };
    std::vector<Cand> cands;
    cands.reserve(alive.size() * static_cast<std::size_t>(cfg_.vocab_size));
    for (std::size_t b = 0; b < alive.size(); ++b) {
      const Eigen::RowVectorXd lsm = log_softmax_row(alive[b].next_logits);
      for (int tok = 0; tok < cfg_.vocab_size; ++tok) {
        if (!std::isfinite(lsm(tok))) continue;  // masked emissions
        cands.push_back({b, tok, alive[b].logp + lsm(tok), lsm(tok)});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& x, const Cand& y) {
      if (x.total != y.total) return x.total > y.total;
      std::vector<int> sx = alive[x.parent].content;
      sx.push_back(x.token);
      std::vector<int> sy = alive[y.parent].content;
      sy.push_back(y.token);
      return lex_less(sx, sy);
    });

    std::vector<Beam> next_alive;
    for (const Cand& c : cands) {
      if (static_cast<int>(next_alive.size()) >= beam_size) break;
      const Beam& parent = alive[c.parent];
      if (c.token == Vocabulary::kEos) {
        Finished f;
        f.content = parent.content;
        f.terminated = true;
        f.logp = c.total;
        f.token_logps = parent.token_logps;
        f.token_logps.push_back(c.token_logp);
        finished.push_back(std::move(f));
        continue;
      }
      Beam child;
      child.content = parent.content;
      child.content.push_back(c.token);
      child.logp = c.total;
      child.token_logps = parent.token_logps;
      child.token_logps.push_back(c.token_logp);
      child.cache = parent.cache;
      if (step < cfg_.max_len) {
        child.next_logits = step_cached(child.cache, c.token, step);
      }
      next_alive.push_back(std::move(child));
    }
    alive = std::move(next_alive);
  }

  // Beams that never emitted EOS within the budget are the pathology we
  // still need to surface: keep them as truncated sequences.
  for (Beam& b : alive) {
    Finished f;
    f.content = std::move(b.content);
    f.terminated = false;
    f.logp = b.logp;
    f.token_logps = std::move(b.token_logps);
    finished.push_back(std::move(f));
  }

  std::sort(finished.begin(), finished.end(), [](const Finished& x, const Finished& y) {
    const double nx = x.normalized(), ny = y.normalized();
    if (nx != ny) return nx > ny;
    return lex_less(x.ranked_ids(), y.ranked_ids());
  });

  DecodeResult out;
  const int keep = std::min<int>(beam_size, static_cast<int>(finished.size()));
  for (int i = 0; i < keep; ++i) {
    Finished& f = finished[static_cast<std::size_t>(i)];
    TokenSequence seq;
    seq.ids = {Vocabulary::kBos};
    seq.ids.insert(seq.ids.end(), f.content.begin(), f.content.end());
    if (f.terminated) seq.ids.push_back(Vocabulary::kEos);
    out.sequences.push_back(std::move(seq));
    out.log_probs.push_back(f.logp);
    out.per_token_log_probs.push_back(std::move(f.token_logps));
  }
  return out;
}

std::vector<double> Captioner::rescore(const Mat& memory, const TokenSequence& seq,
                                       double temperature) const {
  const std::vector<int> content = seq.content_ids();
  std::vector<int> input = {Vocabulary::kBos};
  input.insert(input.end(), content.begin(), content.end());
  std::vector<int> targets = content;
  if (seq.complete()) targets.push_back(Vocabulary::kEos);
  if (targets.empty()) throw Error("cannot rescore an empty sequence");

  const Mat logits = forced_logits(memory, input);
  std::vector<double> out;
  out.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const Eigen::RowVectorXd lsm =
        log_softmax_row(logits.row(static_cast<Eigen::Index>(t)) / temperature);
    out.push_back(lsm(targets[t]));
  }
  return out;
}

}  // namespace caplab
