#include "caplab/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "caplab/hash.hpp"
#include "caplab/metrics.hpp"
#include "caplab/rng.hpp"
#include "caplab/util.hpp"

namespace caplab {

using json = nlohmann::ordered_json;
using nn::Graph;
using nn::Vec;

double xe_loss(const Mat& step_logits, const std::vector<int>& targets) {
  if (static_cast<Eigen::Index>(targets.size()) != step_logits.rows()) {
    throw Error("xe_loss: logits/target length mismatch");
  }
  double total = 0.0;
  long counted = 0;
  for (Eigen::Index t = 0; t < step_logits.rows(); ++t) {
    const int target = targets[static_cast<std::size_t>(t)];
    if (target == Vocabulary::kPad) continue;
    if (target < 0 || target >= step_logits.cols()) throw Error("xe_loss: target out of range");
    const Eigen::RowVectorXd row = step_logits.row(t);
    const double m = row.maxCoeff();
    total += m + std::log((row.array() - m).exp().sum()) - row(target);
    ++counted;
  }
  if (counted == 0) throw Error("xe_loss: no non-PAD targets");
  return total / static_cast<double>(counted);
}

void LrSchedule::validate() const {
  if (!(peak > 0.0) || !(floor > 0.0)) throw Error("lr schedule: rates must be positive");
  if (warmup < 0 || plateau_end < warmup || decay_end < plateau_end) {
    throw Error("lr schedule: breakpoints must be non-decreasing (warmup <= plateau_end <= decay_end)");
  }
}

double LrSchedule::at(long step) const {
  validate();
  if (step < 0) throw Error("lr schedule: negative step");
  if (step < warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (step <= plateau_end) return peak;
  if (step >= decay_end) return floor;
  // Inverse-sqrt interpolation pinned to peak at plateau_end and floor
  // at decay_end.
  const double sp = 1.0 / std::sqrt(static_cast<double>(plateau_end));
  const double sd = 1.0 / std::sqrt(static_cast<double>(decay_end));
  const double a = (peak - floor) / (sp - sd);
  const double c = peak - a * sp;
  return a / std::sqrt(static_cast<double>(step)) + c;
}

namespace {

struct ForcedTargets {
  std::vector<int> input;    // BOS + content
  std::vector<int> targets;  // content (+ EOS when terminated)
};

ForcedTargets forced_targets(const TokenSequence& seq) {
  ForcedTargets ft;
  const std::vector<int> content = seq.content_ids();
  ft.input = {Vocabulary::kBos};
  ft.input.insert(ft.input.end(), content.begin(), content.end());
  ft.targets = content;
  if (seq.complete()) ft.targets.push_back(Vocabulary::kEos);
  return ft;
}

void append_jsonl(const std::filesystem::path& path, const json& j) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  out << j.dump() << "\n";
}

std::vector<int> sample_batch_ids(const std::vector<int>& pool, int batch, std::uint64_t seed,
                                  std::string_view stream, long step) {
  std::vector<int> ids = pool;
  Rng rng = substream(seed, stream, static_cast<std::uint64_t>(step));
  rng.shuffle(ids);
  ids.resize(static_cast<std::size_t>(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(batch))));
  return ids;
}

}  // namespace

double validation_xe_loss(const Captioner& model, const Dataset& dataset,
                          const std::vector<int>& ids, std::size_t threads) {
  if (ids.empty()) throw Error("validation_xe_loss: empty id list");
  std::vector<double> losses(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const SceneInstance& scene = dataset.scene_by_id(ids[i]);
    const Mat memory = model.encode(scene.features);
    const ForcedTargets ft = forced_targets(scene.references.front());
    const Mat logits = model.forced_logits(memory, ft.input);
    losses[i] = xe_loss(logits.topRows(static_cast<Eigen::Index>(ft.targets.size())), ft.targets);
  });
  double acc = 0.0;
  for (double l : losses) acc += l;
  return acc / static_cast<double>(losses.size());
}

XeTrainResult train_xe(Captioner& model, const Dataset& dataset, const XeTrainConfig& config) {
  config.lr.validate();
  XeTrainResult result;
  nn::Adam optimizer(model.params().trainable());
  if (!config.optimizer_in.empty()) optimizer.load_state(config.optimizer_in);

  result.initial_val_loss = validation_xe_loss(model, dataset, dataset.split.val, config.threads);

  const long start = static_cast<long>(optimizer.steps_taken());
  for (long step = start; step < config.steps; ++step) {
    const auto ids = sample_batch_ids(dataset.split.train, config.batch, config.seed, "xe-batch", step);
    Rng ref_rng = substream(config.seed, "xe-ref", static_cast<std::uint64_t>(step));
    std::vector<int> ref_choice(ids.size());
    for (auto& c : ref_choice) c = static_cast<int>(ref_rng.below(kReferencesPerScene));

    const double inv_batch = 1.0 / static_cast<double>(ids.size());
    std::vector<std::map<nn::Param*, Mat>> grads(ids.size());
    std::vector<double> losses(ids.size());
    parallel_for(ids.size(), config.threads, [&](std::size_t i) {
      const SceneInstance& scene = dataset.scene_by_id(ids[i]);
      const ForcedTargets ft =
          forced_targets(scene.references[static_cast<std::size_t>(ref_choice[i])]);
      Graph g;
      const int memory = model.encode_graph(g, scene.features);
      int logits = model.forced_logits_graph(g, memory, ft.input);
      logits = g.slice_rows(logits, 0, static_cast<int>(ft.targets.size()));
      const int picked = g.picked_log_probs(logits, ft.targets);
      const int loss = g.scale(g.sum_all(picked), -1.0 / static_cast<double>(ft.targets.size()));
      losses[i] = g.scalar(loss);
      g.backward(g.scale(loss, inv_batch));
      grads[i] = g.param_grads();
    });

    double batch_loss = 0.0;
    for (double l : losses) batch_loss += l;
    batch_loss *= inv_batch;
    if (!std::isfinite(batch_loss)) {
      throw Error("train_xe: loss diverged (NaN/Inf) at step " + std::to_string(step));
    }

    nn::GradAccumulator acc;
    for (const auto& g : grads) acc.merge(g);  // scene order
    if (!acc.finite()) throw Error("train_xe: gradient diverged at step " + std::to_string(step));
    optimizer.step(config.lr.at(step), acc.grads());

    if ((step + 1) % config.eval_interval == 0 || step + 1 == config.steps) {
      const double val = validation_xe_loss(model, dataset, dataset.split.val, config.threads);
      append_jsonl(config.metrics_log, json{{"step", step + 1},
                                            {"lr", config.lr.at(step)},
                                            {"train_loss", batch_loss},
                                            {"val_loss", val}});
      result.final_val_loss = val;
    }
  }
  if (start >= config.steps) {
    result.final_val_loss = result.initial_val_loss;
  }
  result.steps_run = config.steps - start;
  if (!config.optimizer_out.empty()) optimizer.save_state(config.optimizer_out);
  return result;
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

const char* reward_kind_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::cider: return "cider";
    case RewardKind::raw_score: return "raw_score";
    case RewardKind::discriminator: return "discriminator";
  }
  throw Error("unknown reward kind");
}

RewardKind reward_kind_from_name(const std::string& name) {
  for (RewardKind k : {RewardKind::cider, RewardKind::raw_score, RewardKind::discriminator}) {
    if (name == reward_kind_name(k)) return k;
  }
  throw Error("unknown reward kind: " + name);
}

RewardFunction RewardFunction::make_cider(const CiderD* cider, const Vocabulary* vocab) {
  if (!cider || !vocab) throw Error("reward: cider scorer and vocabulary required");
  RewardFunction r;
  r.kind_ = RewardKind::cider;
  r.cider_ = cider;
  r.vocab_ = vocab;
  return r;
}

RewardFunction RewardFunction::make_encoder(RewardKind kind, const DualEncoder* encoder, double w) {
  if (kind == RewardKind::cider) throw Error("reward: use make_cider for the CIDEr reward");
  if (!encoder) throw Error("reward: encoder required");
  if (!(w > 0.0)) throw Error("reward: w must be > 0");
  RewardFunction r;
  r.kind_ = kind;
  r.encoder_ = encoder;
  r.w_ = w;
  return r;
}

double RewardFunction::operator()(const SceneInstance& scene, const TokenSequence& caption) const {
  if (kind_ == RewardKind::cider) {
    std::vector<std::string> cand;
    for (int id : caption.content_ids()) cand.push_back(vocab_->token(id));
    std::vector<std::vector<std::string>> refs;
    for (const auto& t : scene.reference_texts) refs.push_back(split_ws(t));
    return cider_->score(cand, refs);
  }
  return reward_score(*encoder_, scene.features, caption.content_ids(), w_);
}

std::string cider_fingerprint(const CiderD& cider) {
  // The scorer is pure; fingerprint via a probe scoring. Stable across
  // runs for identical document frequencies.
  const std::vector<std::string> probe = {"a", "b", "a", "c"};
  const std::vector<std::vector<std::string>> refs = {{"a", "b", "c"}, {"a", "c"}};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", cider.ready() ? cider.score(probe, refs) : -1.0);
  return sha256_hex(std::string(buf));
}

std::string RewardFunction::resource_hash() const {
  if (kind_ == RewardKind::cider) return cider_fingerprint(*cider_);
  return encoder_->params().content_hash();
}

double compute_baseline(const std::vector<double>& rewards) {
  if (rewards.empty()) throw Error("compute_baseline: empty reward list");
  double acc = 0.0;
  for (double r : rewards) acc += r;
  return acc / static_cast<double>(rewards.size());
}

int scst_surrogate_graph(Graph& g, const std::vector<int>& log_prob_nodes,
                         const std::vector<double>& rewards) {
  if (log_prob_nodes.size() != rewards.size() || rewards.empty()) {
    throw Error("scst surrogate: candidate/reward count mismatch");
  }
  const double baseline = compute_baseline(rewards);
  Vec coefs(static_cast<Eigen::Index>(rewards.size()));
  for (std::size_t j = 0; j < rewards.size(); ++j) {
    coefs(static_cast<Eigen::Index>(j)) = -(rewards[j] - baseline);
  }
  return g.combine(log_prob_nodes, coefs);
}

ScstStepStats scst_step(Captioner& model, const std::vector<const SceneInstance*>& scenes,
                        const RewardFunction& reward, nn::Adam& optimizer,
                        const ScstConfig& config, long step) {
  if (scenes.empty()) throw Error("scst_step: empty batch");

  struct SceneWork {
    std::vector<TokenSequence> candidates;
    std::vector<double> rewards;
    std::map<nn::Param*, Mat> grads;
    double surrogate = 0.0;
  };
  std::vector<SceneWork> work(scenes.size());

  parallel_for(scenes.size(), config.threads, [&](std::size_t i) {
    const SceneInstance& scene = *scenes[i];
    SceneWork& w = work[i];

    // Candidates are decoded without gradients; rewards are constants.
    const Mat memory = model.encode(scene.features);
    if (config.candidate_mode == CandidateMode::beam) {
      w.candidates = model.beam_search(memory, config.candidates).sequences;
    } else {
      Rng rng = substream(config.seed, "scst-sample",
                          static_cast<std::uint64_t>(step) * 1000003ULL + i);
      w.candidates = model.sample_sequences(memory, config.candidates, config.temperature, rng)
                         .sequences;
    }
    w.rewards.reserve(w.candidates.size());
    for (const auto& cand : w.candidates) w.rewards.push_back(reward(scene, cand));

    const double baseline = compute_baseline(w.rewards);
    bool all_equal = true;
    for (double r : w.rewards) all_equal = all_equal && r == baseline;
    if (all_equal) return;  // zero advantage everywhere: no gradient

    Graph g;
    const int mem_node = model.encode_graph(g, scene.features);
    std::vector<int> log_probs;
    log_probs.reserve(w.candidates.size());
    for (const auto& cand : w.candidates) {
      log_probs.push_back(model.sequence_log_prob_graph(g, mem_node, cand));
    }
    const int surrogate = scst_surrogate_graph(g, log_probs, w.rewards);
    w.surrogate = g.scalar(surrogate);
    g.backward(surrogate);
    w.grads = g.param_grads();
  });

  ScstStepStats stats;
  long n_candidates = 0;
  nn::GradAccumulator acc;
  for (const auto& w : work) {  // scene order
    for (double r : w.rewards) {
      stats.mean_reward += r;
      ++n_candidates;
    }
    if (!w.rewards.empty()) stats.mean_baseline += compute_baseline(w.rewards);
    stats.surrogate += w.surrogate;
    acc.merge(w.grads);
  }
  stats.mean_reward /= static_cast<double>(std::max<long>(1, n_candidates));
  stats.mean_baseline /= static_cast<double>(scenes.size());
  if (!acc.finite() || !std::isfinite(stats.surrogate)) {
    throw Error("scst_step: gradient diverged at step " + std::to_string(step));
  }
  optimizer.step(config.lr, acc.grads());
  return stats;
}

double mean_validation_reward(const Captioner& model, const Dataset& dataset,
                              const std::vector<int>& ids, const RewardFunction& reward,
                              int beam_size, std::size_t threads) {
  if (ids.empty()) throw Error("mean_validation_reward: empty id list");
  std::vector<double> scores(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const SceneInstance& scene = dataset.scene_by_id(ids[i]);
    const Mat memory = model.encode(scene.features);
    DecodeResult top = model.beam_search(memory, beam_size);
    scores[i] = reward(scene, top.sequences.front());
  });
  double acc = 0.0;
  for (double s : scores) acc += s;
  return acc / static_cast<double>(scores.size());
}

ScstResult train_scst(Captioner& model, const Dataset& dataset, const RewardFunction& reward,
                      const ScstConfig& config) {
  ScstResult result;
  const std::string resources_before = reward.resource_hash();

  result.initial_val_reward =
      mean_validation_reward(model, dataset, dataset.split.val, reward, config.candidates,
                             config.threads);

  nn::Adam optimizer(model.params().trainable());
  for (long step = 0; step < config.steps; ++step) {
    const auto ids =
        sample_batch_ids(dataset.split.train, config.batch, config.seed, "scst-batch", step);
    const auto scenes = dataset.scenes_for(ids);
    const ScstStepStats stats = scst_step(model, scenes, reward, optimizer, config, step);

    json line{{"step", step + 1},
              {"mean_reward", stats.mean_reward},
              {"baseline", stats.mean_baseline}};
    if ((step + 1) % config.eval_interval == 0 || step + 1 == config.steps) {
      const double val_reward = mean_validation_reward(model, dataset, dataset.split.val, reward,
                                                       config.candidates, config.threads);
      line["val_reward"] = val_reward;
      result.final_val_reward = val_reward;
      if (config.eval_cider) {
        const auto captions =
            decode_split(model, dataset, dataset.split.val, config.candidates, config.threads);
        std::vector<Tokens> cand_tokens;
        double cider_acc = 0.0;
        for (std::size_t i = 0; i < captions.size(); ++i) {
          const SceneInstance& scene = dataset.scene_by_id(dataset.split.val[i]);
          std::vector<Tokens> refs;
          for (const auto& t : scene.reference_texts) refs.push_back(split_ws(t));
          cand_tokens.push_back(split_ws(captions[i].text));
          cider_acc += config.eval_cider->score(cand_tokens.back(), refs);
        }
        line["cider"] = cider_acc / static_cast<double>(captions.size());
        for (int n = 1; n <= 4; ++n) {
          line["rep_" + std::to_string(n)] = rep_n(cand_tokens, n);
        }
      }
    }
    append_jsonl(config.metrics_log, line);
  }

  if (reward.resource_hash() != resources_before) {
    throw Error("train_scst: reward resources were modified during training");
  }
  return result;
}

}  // namespace caplab
