#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "caplab/vocab.hpp"

namespace caplab {

using Mat = Eigen::MatrixXd;

// Compositional scene inventory. A scene draws 2..4 distinct
// (color, object) combinations, a size per object, and one spatial
// relation between the first two objects. The allowed (color, object)
// grid is split by parity so a "shifted" world can be built whose
// combinations never occur in the default world.
struct WorldConfig {
  std::vector<std::string> objects;
  std::vector<std::string> colors;
  std::vector<std::string> sizes;
  std::vector<std::string> relations;
  int min_objects = 2;
  int max_objects = 4;
  int feature_slots = 16;   // R
  int feature_dim = 256;    // dimension of each visual feature vector
  double noise_sigma = 0.02;
  int max_len = 20;         // maximum caption content length
  int pair_parity = 0;      // (color_idx + object_idx) % 2 must equal this
  std::uint64_t embedding_seed = 0xC0FFEEULL;

  static WorldConfig defaults();
  WorldConfig shifted() const;  // same inventories, complementary parity
  void validate() const;
  std::vector<std::pair<int, int>> allowed_pairs() const;  // (color, object)
};

struct SceneObject {
  int object_idx;
  int color_idx;
  int size_idx;
};

// One synthetic "image": deterministic function of (seed, WorldConfig).
// Reference token ids are bound later, once a vocabulary exists; texts
// are always populated.
struct SceneInstance {
  int id = -1;
  std::uint64_t seed = 0;
  std::vector<SceneObject> objects;
  int relation_idx = -1;
  Mat features;                            // feature_slots x feature_dim
  std::vector<std::string> reference_texts;  // exactly 5
  std::vector<TokenSequence> references;     // tokenized against a vocabulary

  void bind_vocabulary(const Vocabulary& vocab);
};

inline constexpr int kReferencesPerScene = 5;

SceneInstance generate_scene(std::uint64_t seed, const WorldConfig& config);

// Fixed random embedding of a scene symbol, shared by every scene of a
// world; this is what makes caption-feature alignment learnable.
Eigen::RowVectorXd symbol_embedding(const std::string& symbol, const WorldConfig& config);

}  // namespace caplab
