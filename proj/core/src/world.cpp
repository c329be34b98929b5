#include "caplab/world.hpp"

#include <algorithm>
#include <cmath>

#include "caplab/rng.hpp"
#include "caplab/util.hpp"

namespace caplab {

WorldConfig WorldConfig::defaults() {
  WorldConfig cfg;
  cfg.objects = {"dog", "cat", "bird", "car", "boat", "tree", "ball", "chair", "house", "horse"};
  cfg.colors = {"red", "blue", "green", "yellow", "white", "black"};
  cfg.sizes = {"big", "small", "tiny", "huge"};
  cfg.relations = {"above", "below", "beside", "behind", "near"};
  return cfg;
}

WorldConfig WorldConfig::shifted() const {
  WorldConfig cfg = *this;
  cfg.pair_parity = 1 - pair_parity;
  return cfg;
}

void WorldConfig::validate() const {
  if (objects.empty() || colors.empty() || sizes.empty() || relations.empty()) {
    throw Error("world config has an empty inventory");
  }
  if (min_objects < 1 || max_objects < min_objects) {
    throw Error("world config: invalid object count range");
  }
  if (feature_slots < max_objects + 1) {
    throw Error("world config: feature_slots must cover objects plus relation");
  }
  if (feature_dim < 1 || max_len < 4) throw Error("world config: invalid dimensions");
  if (pair_parity != 0 && pair_parity != 1) throw Error("world config: parity must be 0 or 1");
  if (static_cast<int>(allowed_pairs().size()) < max_objects) {
    throw Error("world config: not enough allowed (color, object) pairs");
  }
}

std::vector<std::pair<int, int>> WorldConfig::allowed_pairs() const {
  std::vector<std::pair<int, int>> pairs;
  for (int c = 0; c < static_cast<int>(colors.size()); ++c) {
    for (int o = 0; o < static_cast<int>(objects.size()); ++o) {
      if ((c + o) % 2 == pair_parity) pairs.emplace_back(c, o);
    }
  }
  return pairs;
}

Eigen::RowVectorXd symbol_embedding(const std::string& symbol, const WorldConfig& config) {
  Rng rng(splitmix64(config.embedding_seed ^ fnv1a64(symbol)));
  Eigen::RowVectorXd v(config.feature_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.feature_dim));
  for (int i = 0; i < config.feature_dim; ++i) v(i) = rng.gauss(0.0, 1.0) * scale;
  return v;
}

namespace {

// Five reference grammars per scene; different surface forms over the
// same content, emulating annotator variance. All templates stay within
// max_len = 20 content tokens for up to four objects.
std::string render_reference(int grammar, const WorldConfig& cfg,
                             const std::vector<SceneObject>& objs, int relation) {
  const auto obj = [&](int k) { return cfg.objects[static_cast<std::size_t>(objs[k].object_idx)]; };
  const auto col = [&](int k) { return cfg.colors[static_cast<std::size_t>(objs[k].color_idx)]; };
  const auto siz = [&](int k) { return cfg.sizes[static_cast<std::size_t>(objs[k].size_idx)]; };
  const std::string rel = cfg.relations[static_cast<std::size_t>(relation)];
  const int n = static_cast<int>(objs.size());

  std::vector<std::string> w;
  switch (grammar) {
    case 0:
      w = {"a", col(0), obj(0), "is", rel, "a", col(1), obj(1)};
      for (int k = 2; k < n; ++k) {
        w.insert(w.end(), {"and", "a", col(k), obj(k)});
      }
      break;
    case 1:
      w = {"the", siz(0), obj(0), "is", rel, "the", siz(1), col(1), obj(1)};
      for (int k = 2; k < n; ++k) {
        w.insert(w.end(), {"and", "the", siz(k), obj(k)});
      }
      break;
    case 2:
      w = {"there", "is", "a", siz(0), col(0), obj(0), rel, "a", col(1), obj(1)};
      for (int k = 2; k < n; ++k) {
        w.insert(w.end(), {"and", "a", obj(k)});
      }
      break;
    case 3:
      w = {"a", "photo", "of", "a", col(0), obj(0), rel, "a", siz(1), obj(1)};
      for (int k = 2; k < n; ++k) {
        w.insert(w.end(), {"with", "a", col(k), obj(k)});
      }
      break;
    case 4:
      w = {"a", siz(0), col(0), obj(0), rel, "a", siz(1), col(1), obj(1)};
      for (int k = 2; k < n; ++k) {
        w.insert(w.end(), {"and", "a", col(k), obj(k)});
      }
      break;
    default:
      throw Error("unknown grammar index");
  }
  return join_ws(w);
}

}  // namespace

SceneInstance generate_scene(std::uint64_t seed, const WorldConfig& config) {
  config.validate();
  SceneInstance scene;
  scene.seed = seed;

  Rng rng(splitmix64(seed ^ 0x5ce9e5ULL));
  const int n_objects =
      config.min_objects +
      static_cast<int>(rng.below(static_cast<std::uint64_t>(config.max_objects - config.min_objects + 1)));

  // Distinct (color, object) combinations per scene.
  auto pairs = config.allowed_pairs();
  rng.shuffle(pairs);
  for (int k = 0; k < n_objects; ++k) {
    SceneObject o;
    o.color_idx = pairs[static_cast<std::size_t>(k)].first;
    o.object_idx = pairs[static_cast<std::size_t>(k)].second;
    o.size_idx = static_cast<int>(rng.below(config.sizes.size()));
    scene.objects.push_back(o);
  }
  scene.relation_idx = static_cast<int>(rng.below(config.relations.size()));

  for (int grammar = 0; grammar < kReferencesPerScene; ++grammar) {
    std::string ref = render_reference(grammar, config, scene.objects, scene.relation_idx);
    if (static_cast<int>(split_ws(ref).size()) > config.max_len) {
      throw Error("reference exceeds max_len; enlarge max_len or shrink templates");
    }
    scene.reference_texts.push_back(std::move(ref));
  }

  // Slot k holds object k's symbols, the next slot the relation; the
  // remaining slots carry the scene-level mean. Per-slot noise on top.
  scene.features = Mat::Zero(config.feature_slots, config.feature_dim);
  Eigen::RowVectorXd context = Eigen::RowVectorXd::Zero(config.feature_dim);
  int n_symbols = 0;
  for (int k = 0; k < n_objects; ++k) {
    const auto& o = scene.objects[static_cast<std::size_t>(k)];
    Eigen::RowVectorXd slot =
        symbol_embedding(config.objects[static_cast<std::size_t>(o.object_idx)], config) +
        symbol_embedding(config.colors[static_cast<std::size_t>(o.color_idx)], config) +
        symbol_embedding(config.sizes[static_cast<std::size_t>(o.size_idx)], config);
    scene.features.row(k) = slot;
    context += slot;
    n_symbols += 3;
  }
  const Eigen::RowVectorXd rel_emb =
      symbol_embedding(config.relations[static_cast<std::size_t>(scene.relation_idx)], config);
  scene.features.row(n_objects) = rel_emb;
  context += rel_emb;
  n_symbols += 1;
  context /= static_cast<double>(n_symbols);
  for (int r = n_objects + 1; r < config.feature_slots; ++r) scene.features.row(r) = context;

  if (config.noise_sigma > 0.0) {
    for (int r = 0; r < config.feature_slots; ++r) {
      for (int c = 0; c < config.feature_dim; ++c) {
        scene.features(r, c) += rng.gauss(0.0, config.noise_sigma);
      }
    }
  }
  return scene;
}

void SceneInstance::bind_vocabulary(const Vocabulary& vocab) {
  references.clear();
  references.reserve(reference_texts.size());
  for (const auto& text : reference_texts) {
    references.push_back(TokenSequence::from_text(vocab, text, true));
  }
}

}  // namespace caplab
