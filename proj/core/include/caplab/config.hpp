#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "caplab/captioner.hpp"
#include "caplab/discriminator.hpp"
#include "caplab/dual_encoder.hpp"
#include "caplab/training.hpp"
#include "caplab/world.hpp"

namespace caplab {

// The JSON Schema the config file is validated against before any stage
// runs. The same document is published at docs/config-schema.json; a test
// keeps the two in sync.
const std::string& config_schema_json();

// Minimal JSON-Schema subset validator (type, properties, required,
// additionalProperties, enum, minimum/maximum, exclusiveMinimum, items,
// minItems/maxItems). Throws Error with a JSON-pointer-style path.
void validate_against_schema(const nlohmann::json& value, const nlohmann::json& schema,
                             const std::string& path = "");

struct EncoderPretrainSection {
  long steps = 900;
  int batch = 16;
  double lr = 1e-4;
  long clean_extra_steps = 300;
  long eval_interval = 100;
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::string out_dir = "runs/default";
  std::size_t threads = 0;  // 0: CAPLAB_THREADS or 1
  bool deterministic = false;

  int n_scenes = 2500;
  int n_shifted = 250;
  std::array<double, 3> ratios = {0.8, 0.1, 0.1};
  WorldConfig world = WorldConfig::defaults();

  CaptionerConfig model;       // vocab_size bound to the dataset at load
  DualEncoderConfig encoder;

  int lora_rank = 8;
  double lora_alpha = 16.0;

  RewardKind reward_kind = RewardKind::discriminator;
  double reward_w = 2.5;

  XeTrainConfig xe;
  EncoderPretrainSection encoder_pretrain;
  ScstConfig scst;
  DiscFinetuneConfig disc;
  std::string negatives_source = "self";  // or "manual"

  int eval_beam = 5;

  static RunConfig from_json(const nlohmann::json& j);  // validates first
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;  // fully resolved, canonical order
  std::string config_hash() const;

  // CAPLAB_OUT_DIR and CAPLAB_THREADS are the only environment overrides.
  void apply_env_overrides();
  std::size_t effective_threads() const;
};

}  // namespace caplab
