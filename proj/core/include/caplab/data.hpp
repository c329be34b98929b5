#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "caplab/world.hpp"

namespace caplab {

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  std::vector<int> shifted;  // out-of-domain ids, disjoint from the above

  void save(const std::filesystem::path& path) const;
  static DatasetSplit load(const std::filesystem::path& path);
};

// Deterministic disjoint split of `ids`; ratios must be non-negative and
// sum to 1 (anything else would overlap or leave ids uncovered).
DatasetSplit make_splits(const std::vector<int>& ids, const std::array<double, 3>& ratios,
                         std::uint64_t seed);

// Order-insensitive vocabulary construction over caption texts.
Vocabulary build_vocabulary(const std::vector<std::string>& corpus);

struct Dataset {
  WorldConfig world;
  std::vector<SceneInstance> scenes;   // ids 0..n-1
  std::vector<SceneInstance> shifted;  // ids n..n+m-1, complementary-parity world
  Vocabulary vocab;                    // built from train references only
  DatasetSplit split;

  const SceneInstance& scene_by_id(int id) const;
  std::vector<const SceneInstance*> scenes_for(const std::vector<int>& ids) const;
  std::vector<std::string> reference_corpus(const std::vector<int>& ids) const;
};

Dataset build_dataset(const WorldConfig& world, int n_scenes, const std::array<double, 3>& ratios,
                      int n_shifted, std::uint64_t seed);

// JSON-lines persistence: one {id, seed, references} object per scene.
// Features are re-derived from the seed at load, never serialized.
void save_scenes(const std::filesystem::path& path, const std::vector<SceneInstance>& scenes);
std::vector<SceneInstance> load_scenes(const std::filesystem::path& path, const WorldConfig& world);

void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir, const WorldConfig& world);

}  // namespace caplab
