#include "caplab/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "caplab/util.hpp"

namespace caplab {

using json = nlohmann::ordered_json;

namespace {

std::unordered_map<std::string, int> ngram_counts(const Tokens& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) >= n) {
    for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= tokens.size(); ++s) {
      counts[ngram_key(tokens, s, n)] += 1;
    }
  }
  return counts;
}

}  // namespace

double bleu4(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (candidate.empty()) throw Error("bleu4: empty candidate");
  if (references.empty()) throw Error("bleu4: no references");

  double log_precision_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const auto cand = ngram_counts(candidate, n);
    long total = 0;
    for (const auto& [_, c] : cand) total += c;
    if (total == 0) return 0.0;
    long clipped = 0;
    for (const auto& [gram, c] : cand) {
      int best_ref = 0;
      for (const auto& ref : references) {
        const auto rc = ngram_counts(ref, n);
        const auto it = rc.find(gram);
        if (it != rc.end()) best_ref = std::max(best_ref, it->second);
      }
      clipped += std::min<long>(c, best_ref);
    }
    if (clipped == 0) return 0.0;
    log_precision_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }

  const long c = static_cast<long>(candidate.size());
  long r = static_cast<long>(references[0].size());
  for (const auto& ref : references) {
    const long len = static_cast<long>(ref.size());
    const long d_new = std::labs(len - c), d_old = std::labs(r - c);
    if (d_new < d_old || (d_new == d_old && len < r)) r = len;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_precision_sum / 4.0);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) throw Error("rouge_l: no references");
  const double beta = 1.2;
  double best = 0.0;
  for (const auto& ref : references) {
    if (candidate.empty() || ref.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double rec = lcs / static_cast<double>(ref.size());
    const double prec = lcs / static_cast<double>(candidate.size());
    const double f = (1.0 + beta * beta) * rec * prec / (rec + beta * beta * prec);
    best = std::max(best, f);
  }
  return best;
}

double rep_n(const std::vector<Tokens>& captions, int n, const std::set<std::string>& stopwords) {
  if (n < 1 || n > 4) throw Error("rep_n: n must be in 1..4");
  if (captions.empty()) return 0.0;
  double total_repeats = 0.0;
  for (const auto& raw : captions) {
    Tokens tokens;
    if (stopwords.empty()) {
      tokens = raw;
    } else {
      for (const auto& t : raw) {
        if (!stopwords.count(t)) tokens.push_back(t);
      }
    }
    if (static_cast<int>(tokens.size()) < n) continue;
    const std::size_t total = tokens.size() - static_cast<std::size_t>(n) + 1;
    std::unordered_set<std::string> distinct;
    for (std::size_t s = 0; s + static_cast<std::size_t>(n) <= tokens.size(); ++s) {
      distinct.insert(ngram_key(tokens, s, n));
    }
    total_repeats += static_cast<double>(total - distinct.size());
  }
  return total_repeats / static_cast<double>(captions.size());
}

RetrievalMetrics retrieval_eval(const Mat& similarity) {
  if (similarity.rows() != similarity.cols() || similarity.rows() == 0) {
    throw Error("retrieval_eval: caption/image count mismatch");
  }
  const Eigen::Index n = similarity.rows();
  RetrievalMetrics out;
  double hits1 = 0, hits5 = 0, hits10 = 0, rr = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    // Rank of the true image under descending similarity, ties broken by
    // image id ascending.
    long rank = 1;
    const double own = similarity(i, i);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (similarity(i, j) > own || (similarity(i, j) == own && j < i)) ++rank;
    }
    if (rank <= 1) hits1 += 1;
    if (rank <= 5) hits5 += 1;
    if (rank <= 10) hits10 += 1;
    rr += 1.0 / static_cast<double>(rank);
  }
  const double dn = static_cast<double>(n);
  out.r_at_1 = 100.0 * hits1 / dn;
  out.r_at_5 = 100.0 * hits5 / dn;
  out.r_at_10 = 100.0 * hits10 / dn;
  out.mrr = 100.0 * rr / dn;
  return out;
}

const std::vector<std::string>& report_metric_order() {
  static const std::vector<std::string> order = {
      "bleu4", "rouge_l", "cider", "rep_1",  "rep_2",  "rep_3", "rep_4",
      "raw_score", "disc_score", "r_at_1", "r_at_5", "r_at_10", "mrr"};
  return order;
}

std::string EvalReport::to_json_string() const {
  json j;
  j["schema_version"] = schema_version;
  j["tag"] = tag;
  j["split"] = split;
  j["corpus_id"] = corpus_id;
  json hashes;
  for (const auto& [k, v] : checkpoint_hashes) hashes[k] = v;
  j["checkpoint_hashes"] = hashes;
  json m;
  for (const auto& name : report_metric_order()) {
    const auto it = metrics.find(name);
    if (it == metrics.end() || !it->second.has_value()) {
      m[name] = nullptr;
    } else {
      m[name] = *it->second;
    }
  }
  j["metrics"] = m;
  json errs;
  for (const auto& [k, v] : errors) errs[k] = v;
  j["errors"] = errs;
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json_string(const std::string& body) {
  const json j = json::parse(body);
  EvalReport r;
  r.schema_version = j.at("schema_version").get<int>();
  r.tag = j.at("tag").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.corpus_id = j.at("corpus_id").get<std::string>();
  for (const auto& [k, v] : j.at("checkpoint_hashes").items()) {
    r.checkpoint_hashes[k] = v.get<std::string>();
  }
  for (const auto& [k, v] : j.at("metrics").items()) {
    r.metrics[k] = v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()};
  }
  for (const auto& [k, v] : j.at("errors").items()) r.errors[k] = v.get<std::string>();
  return r;
}

void EvalReport::save(const std::filesystem::path& path) const {
  write_file(path, to_json_string());
}

EvalReport EvalReport::load(const std::filesystem::path& path) {
  return from_json_string(read_file(path));
}

std::vector<TokenSequence> decode_split(const Captioner& captioner, const Dataset& dataset,
                                        const std::vector<int>& scene_ids, int beam_size,
                                        std::size_t threads) {
  std::vector<TokenSequence> captions(scene_ids.size());
  parallel_for(scene_ids.size(), threads, [&](std::size_t i) {
    const SceneInstance& scene = dataset.scene_by_id(scene_ids[i]);
    const Mat memory = captioner.encode(scene.features);
    DecodeResult result = beam_size <= 1 ? captioner.greedy(memory)
                                         : captioner.beam_search(memory, beam_size);
    TokenSequence seq = std::move(result.sequences.front());
    seq.text = dataset.vocab.decode(seq.ids);
    captions[i] = std::move(seq);
  });
  return captions;
}

EvalReport evaluate_checkpoint(const Captioner& captioner, const Dataset& dataset,
                               const std::vector<int>& scene_ids, const EvalScorers& scorers,
                               int beam_size, std::size_t threads) {
  if (scene_ids.empty()) throw Error("evaluate: empty split");
  if (!scorers.cider || !scorers.retrieval) throw Error("evaluate: missing scorers");

  EvalReport report;
  const auto captions = decode_split(captioner, dataset, scene_ids, beam_size, threads);

  std::vector<Tokens> cand_tokens;
  std::vector<std::vector<Tokens>> ref_tokens;
  cand_tokens.reserve(captions.size());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    cand_tokens.push_back(split_ws(captions[i].text));
    const SceneInstance& scene = dataset.scene_by_id(scene_ids[i]);
    std::vector<Tokens> refs;
    for (const auto& t : scene.reference_texts) refs.push_back(split_ws(t));
    ref_tokens.push_back(std::move(refs));
  }

  const auto guarded = [&](const std::string& name, const std::function<double()>& fn) {
    try {
      report.metrics[name] = fn();
    } catch (const std::exception& e) {
      report.metrics[name] = std::nullopt;
      report.errors[name] = e.what();
    }
  };

  guarded("bleu4", [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < cand_tokens.size(); ++i) acc += bleu4(cand_tokens[i], ref_tokens[i]);
    return acc / static_cast<double>(cand_tokens.size());
  });
  guarded("rouge_l", [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < cand_tokens.size(); ++i) acc += rouge_l(cand_tokens[i], ref_tokens[i]);
    return acc / static_cast<double>(cand_tokens.size());
  });
  guarded("cider", [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < cand_tokens.size(); ++i) {
      acc += scorers.cider->score(cand_tokens[i], ref_tokens[i]);
    }
    return acc / static_cast<double>(cand_tokens.size());
  });
  for (int n = 1; n <= 4; ++n) {
    guarded("rep_" + std::to_string(n), [&] { return rep_n(cand_tokens, n); });
  }

  const auto mean_score = [&](const DualEncoder& enc) {
    double acc = 0.0;
    for (std::size_t i = 0; i < captions.size(); ++i) {
      const SceneInstance& scene = dataset.scene_by_id(scene_ids[i]);
      acc += reward_score(enc, scene.features, captions[i].content_ids(), scorers.reward_w);
    }
    return acc / static_cast<double>(captions.size());
  };
  guarded("raw_score", [&] { return mean_score(*scorers.retrieval); });
  if (scorers.discriminator) {
    guarded("disc_score", [&] { return mean_score(*scorers.discriminator); });
  } else {
    report.metrics["disc_score"] = std::nullopt;
  }

  guarded("r_at_1", [&] {
    std::vector<const Mat*> feats;
    std::vector<std::vector<int>> texts;
    for (std::size_t i = 0; i < captions.size(); ++i) {
      feats.push_back(&dataset.scene_by_id(scene_ids[i]).features);
      texts.push_back(captions[i].content_ids());
    }
    const Mat T = scorers.retrieval->embed_texts(texts);
    const Mat V = scorers.retrieval->embed_images(feats);
    const RetrievalMetrics rm = retrieval_eval(similarity(T, V));
    report.metrics["r_at_5"] = rm.r_at_5;
    report.metrics["r_at_10"] = rm.r_at_10;
    report.metrics["mrr"] = rm.mrr;
    return rm.r_at_1;
  });

  return report;
}

}  // namespace caplab
