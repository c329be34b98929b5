#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "caplab/captioner.hpp"
#include "caplab/cider.hpp"
#include "caplab/data.hpp"
#include "caplab/dual_encoder.hpp"
#include "caplab/nn/optim.hpp"

namespace caplab {

// Mean negative log-likelihood over non-PAD target positions; logits row
// t is the step distribution for targets[t].
double xe_loss(const Mat& step_logits, const std::vector<int>& targets);

// Piecewise schedule: linear warmup to the peak, constant plateau,
// inverse-sqrt interpolation down to the floor, then constant floor.
struct LrSchedule {
  double peak = 2.5e-4;
  double floor = 1e-5;
  long warmup = 1000;
  long plateau_end = 10000;
  long decay_end = 15000;

  void validate() const;
  double at(long step) const;
};

struct XeTrainConfig {
  long steps = 2000;
  int batch = 16;
  LrSchedule lr;
  long eval_interval = 200;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path metrics_log;     // optional JSONL
  std::filesystem::path optimizer_in;    // optional: resume optimizer state
  std::filesystem::path optimizer_out;   // optional: persist optimizer state
};

struct XeTrainResult {
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  long steps_run = 0;
};

// Cross-entropy training over (scene, reference) pairs. Batch membership
// and reference choice are pure functions of (seed, step), so resuming
// from a checkpoint plus optimizer state reproduces the uninterrupted
// trajectory bit for bit.
XeTrainResult train_xe(Captioner& model, const Dataset& dataset, const XeTrainConfig& config);

double validation_xe_loss(const Captioner& model, const Dataset& dataset,
                          const std::vector<int>& ids, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

enum class RewardKind { cider, raw_score, discriminator };

const char* reward_kind_name(RewardKind kind);
RewardKind reward_kind_from_name(const std::string& name);

// Pure scorer: the same (scene, caption) always yields the same scalar.
class RewardFunction {
 public:
  static RewardFunction make_cider(const CiderD* cider, const Vocabulary* vocab);
  static RewardFunction make_encoder(RewardKind kind, const DualEncoder* encoder, double w);

  double operator()(const SceneInstance& scene, const TokenSequence& caption) const;
  RewardKind kind() const { return kind_; }
  // Fingerprint of the bound resources; training verifies it is unchanged.
  std::string resource_hash() const;

 private:
  RewardKind kind_ = RewardKind::cider;
  const CiderD* cider_ = nullptr;
  const Vocabulary* vocab_ = nullptr;
  const DualEncoder* encoder_ = nullptr;
  double w_ = 2.5;
};

std::string cider_fingerprint(const CiderD& cider);

double compute_baseline(const std::vector<double>& rewards);

// Surrogate node  -sum_j (r_j - b) * logp_j  with b = mean(rewards);
// rewards enter as constants, so no gradient flows through them.
int scst_surrogate_graph(nn::Graph& g, const std::vector<int>& log_prob_nodes,
                         const std::vector<double>& rewards);

enum class CandidateMode { beam, sample };

struct ScstConfig {
  long steps = 400;
  int batch = 8;
  double lr = 2e-5;
  int candidates = 5;
  CandidateMode candidate_mode = CandidateMode::beam;
  double temperature = 1.0;
  long eval_interval = 50;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path metrics_log;  // optional JSONL
  const CiderD* eval_cider = nullptr; // optional: adds CIDEr/Rep-n to eval lines
};

struct ScstStepStats {
  double mean_reward = 0.0;
  double mean_baseline = 0.0;
  double surrogate = 0.0;
};

// One SCST update: decode candidates per scene, score them, subtract the
// per-scene mean-reward baseline, and ascend the reward-weighted
// sequence log-likelihood. Any reward failure aborts the step.
ScstStepStats scst_step(Captioner& model, const std::vector<const SceneInstance*>& scenes,
                        const RewardFunction& reward, nn::Adam& optimizer,
                        const ScstConfig& config, long step);

struct ScstResult {
  double initial_val_reward = 0.0;
  double final_val_reward = 0.0;
};

ScstResult train_scst(Captioner& model, const Dataset& dataset, const RewardFunction& reward,
                      const ScstConfig& config);

double mean_validation_reward(const Captioner& model, const Dataset& dataset,
                              const std::vector<int>& ids, const RewardFunction& reward,
                              int beam_size, std::size_t threads);

}  // namespace caplab
