#include "caplab/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "caplab/rng.hpp"
#include "caplab/util.hpp"

namespace caplab {

using json = nlohmann::ordered_json;

void DatasetSplit::save(const std::filesystem::path& path) const {
  json j;
  j["train"] = train;
  j["val"] = val;
  j["test"] = test;
  j["shifted"] = shifted;
  write_file(path, j.dump(2) + "\n");
}

DatasetSplit DatasetSplit::load(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  DatasetSplit s;
  s.train = j.at("train").get<std::vector<int>>();
  s.val = j.at("val").get<std::vector<int>>();
  s.test = j.at("test").get<std::vector<int>>();
  s.shifted = j.at("shifted").get<std::vector<int>>();
  return s;
}

DatasetSplit make_splits(const std::vector<int>& ids, const std::array<double, 3>& ratios,
                         std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw Error("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error("split ratios must sum to 1 (got " + std::to_string(sum) +
                "); overlapping or incomplete ratio specs are rejected");
  }
  const auto n = static_cast<long>(ids.size());
  const long n_val = std::lround(ratios[1] * static_cast<double>(n));
  const long n_test = std::lround(ratios[2] * static_cast<double>(n));
  const long n_train = n - n_val - n_test;
  if (n_train < 0) throw Error("split ratios leave no room for the train set");

  std::vector<int> shuffled = ids;
  Rng rng = substream(seed, "splits");
  rng.shuffle(shuffled);

  DatasetSplit out;
  out.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  out.val.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
  out.test.assign(shuffled.begin() + n_train + n_val, shuffled.end());
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus) {
  return Vocabulary::from_corpus(corpus);
}

const SceneInstance& Dataset::scene_by_id(int id) const {
  const int n = static_cast<int>(scenes.size());
  if (id >= 0 && id < n) return scenes[static_cast<std::size_t>(id)];
  const int k = id - n;
  if (k >= 0 && k < static_cast<int>(shifted.size())) return shifted[static_cast<std::size_t>(k)];
  throw Error("no scene with id " + std::to_string(id));
}

std::vector<const SceneInstance*> Dataset::scenes_for(const std::vector<int>& ids) const {
  std::vector<const SceneInstance*> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(&scene_by_id(id));
  return out;
}

std::vector<std::string> Dataset::reference_corpus(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size() * kReferencesPerScene);
  for (int id : ids) {
    for (const auto& t : scene_by_id(id).reference_texts) out.push_back(t);
  }
  return out;
}

Dataset build_dataset(const WorldConfig& world, int n_scenes, const std::array<double, 3>& ratios,
                      int n_shifted, std::uint64_t seed) {
  world.validate();
  if (n_scenes < 3) throw Error("dataset needs at least 3 scenes");

  Dataset ds;
  ds.world = world;
  ds.scenes.reserve(static_cast<std::size_t>(n_scenes));
  for (int id = 0; id < n_scenes; ++id) {
    const std::uint64_t scene_seed = substream(seed, "scene-seed", static_cast<std::uint64_t>(id)).next_u64();
    SceneInstance s = generate_scene(scene_seed, world);
    s.id = id;
    ds.scenes.push_back(std::move(s));
  }

  const WorldConfig shifted_world = world.shifted();
  for (int k = 0; k < n_shifted; ++k) {
    const std::uint64_t scene_seed =
        substream(seed, "shifted-scene-seed", static_cast<std::uint64_t>(k)).next_u64();
    SceneInstance s = generate_scene(scene_seed, shifted_world);
    s.id = n_scenes + k;
    ds.shifted.push_back(std::move(s));
  }

  std::vector<int> ids(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) ids[static_cast<std::size_t>(i)] = i;
  ds.split = make_splits(ids, ratios, seed);
  for (const auto& s : ds.shifted) ds.split.shifted.push_back(s.id);

  ds.vocab = build_vocabulary(ds.reference_corpus(ds.split.train));
  for (auto& s : ds.scenes) s.bind_vocabulary(ds.vocab);
  for (auto& s : ds.shifted) s.bind_vocabulary(ds.vocab);
  return ds;
}

void save_scenes(const std::filesystem::path& path, const std::vector<SceneInstance>& scenes) {
  std::ostringstream out;
  for (const auto& s : scenes) {
    json j;
    j["id"] = s.id;
    j["seed"] = s.seed;
    j["references"] = s.reference_texts;
    out << j.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<SceneInstance> load_scenes(const std::filesystem::path& path,
                                       const WorldConfig& world) {
  std::vector<SceneInstance> scenes;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    SceneInstance s = generate_scene(j.at("seed").get<std::uint64_t>(), world);
    s.id = j.at("id").get<int>();
    const auto refs = j.at("references").get<std::vector<std::string>>();
    if (refs != s.reference_texts) {
      throw Error("scene " + std::to_string(s.id) +
                  ": stored references do not match regeneration from seed");
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  save_scenes(dir / "scenes.jsonl", ds.scenes);
  save_scenes(dir / "scenes_shifted.jsonl", ds.shifted);
  ds.vocab.save(dir / "vocab.txt");
  ds.split.save(dir / "splits.json");
}

Dataset load_dataset(const std::filesystem::path& dir, const WorldConfig& world) {
  Dataset ds;
  ds.world = world;
  ds.scenes = load_scenes(dir / "scenes.jsonl", world);
  ds.shifted = load_scenes(dir / "scenes_shifted.jsonl", world.shifted());
  ds.vocab = Vocabulary::load(dir / "vocab.txt");
  ds.split = DatasetSplit::load(dir / "splits.json");
  for (auto& s : ds.scenes) s.bind_vocabulary(ds.vocab);
  for (auto& s : ds.shifted) s.bind_vocabulary(ds.vocab);
  return ds;
}

}  // namespace caplab
