#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "caplab/config.hpp"
#include "caplab/manifest.hpp"
#include "caplab/metrics.hpp"

namespace caplab {

// Stage DAG over one run directory:
//
//   gen-data -> train-xe ----------------> train-scst(kind) -> evaluate
//            -> pretrain-encoder -> train-reward-captioner
//                                -> mine-negatives -> finetune-discriminator
//
// Every consumed artifact is content-hash-verified against the manifest;
// re-running a completed stage with identical inputs is a no-op.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  // Stage entry points. `run_stage` dispatches by name; train-scst takes
  // the reward kind from the config unless overridden.
  void run_stage(const std::string& stage, const std::string& reward_override = "");
  void gen_data();
  void train_xe_stage();
  void pretrain_encoder_stage();
  void train_reward_captioner_stage();
  void mine_negatives_stage();
  void finetune_discriminator_stage();
  void train_scst_stage(RewardKind kind);
  void evaluate_stage(const std::string& split);

  static const std::vector<std::string>& stage_names();
  static const std::vector<std::string>& canonical_tags();

  const std::filesystem::path& run_dir() const { return run_dir_; }
  const RunConfig& config() const { return cfg_; }
  RunManifest& manifest() { return manifest_; }

  // Relative artifact paths.
  static std::string checkpoint_rel(const std::string& tag) { return "checkpoints/" + tag + ".ckpt"; }
  static std::string report_rel(const std::string& tag, const std::string& split) {
    return "reports/report_" + tag + "_" + split + ".json";
  }

 private:
  struct StageGuard;

  Dataset& dataset();
  CiderD& train_cider();
  std::string corpus_id(const std::string& split);
  std::vector<int> split_ids(const std::string& split);

  // Verifies existence + manifest hash of an artifact, naming the stage
  // that produces it when missing.
  std::string require_artifact(const std::string& rel_path);
  static std::string producing_stage(const std::string& rel_path);

  std::unique_ptr<Captioner> make_captioner() const;
  std::unique_ptr<Captioner> load_captioner(const std::string& rel_ckpt,
                                            const std::vector<std::string>& allowed_stages);
  std::unique_ptr<DualEncoder> load_encoder(const std::string& rel_ckpt,
                                            const std::vector<std::string>& allowed_stages);

  RunConfig cfg_;
  std::filesystem::path run_dir_;
  RunManifest manifest_;
  std::unique_ptr<Dataset> dataset_;
  std::unique_ptr<CiderD> cider_;
};

}  // namespace caplab
