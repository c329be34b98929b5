#include "caplab/negatives.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <iostream>
#include <sstream>

#include "caplab/rng.hpp"
#include "caplab/util.hpp"

namespace caplab {

using json = nlohmann::ordered_json;

const char* corruption_mode_name(CorruptionMode mode) {
  switch (mode) {
    case CorruptionMode::truncate: return "truncate";
    case CorruptionMode::repeat_final: return "repeat_final";
    case CorruptionMode::duplicate_concept: return "duplicate_concept";
    case CorruptionMode::swap: return "swap";
    case CorruptionMode::substitute: return "substitute";
    case CorruptionMode::drop: return "drop";
  }
  throw Error("unknown corruption mode");
}

CorruptionMode corruption_mode_from_name(const std::string& name) {
  for (CorruptionMode m : {CorruptionMode::truncate, CorruptionMode::repeat_final,
                           CorruptionMode::duplicate_concept, CorruptionMode::swap,
                           CorruptionMode::substitute, CorruptionMode::drop}) {
    if (name == corruption_mode_name(m)) return m;
  }
  throw Error("unknown corruption mode: " + name);
}

namespace {

std::vector<int> content_token_pool(const Vocabulary& vocab) {
  std::vector<int> pool;
  for (int id = 3; id < vocab.size(); ++id) pool.push_back(id);
  return pool;
}

}  // namespace

TokenSequence corrupt(const TokenSequence& caption, const CorruptionSpec& spec,
                      const Vocabulary& vocab) {
  const std::vector<int> content = caption.content_ids();
  const std::size_t n = content.size();
  if (n < 3) throw Error("corrupt: caption too short (needs >= 3 content tokens)");

  Rng rng(splitmix64(spec.seed ^ fnv1a64(corruption_mode_name(spec.mode))));
  std::vector<int> out = content;
  bool terminated = true;

  switch (spec.mode) {
    case CorruptionMode::truncate: {
      // Strict prefix cut mid-phrase; the result never terminates.
      const std::size_t keep = 2 + static_cast<std::size_t>(rng.below(n - 2));
      out.assign(content.begin(), content.begin() + static_cast<long>(keep));
      terminated = false;
      break;
    }
    case CorruptionMode::repeat_final: {
      const int k = 2 + static_cast<int>(rng.below(2));  // 2 or 3 extra copies
      for (int i = 0; i < k; ++i) out.push_back(content.back());
      break;
    }
    case CorruptionMode::duplicate_concept: {
      std::size_t span_len, span_start;
      if (n <= 6) {
        span_start = 0;
        span_len = n;
      } else {
        span_len = 3 + static_cast<std::size_t>(rng.below(3));  // 3..5
        span_start = static_cast<std::size_t>(rng.below(n - span_len + 1));
      }
      if (vocab.contains("and")) out.push_back(vocab.encode_token("and"));
      out.insert(out.end(), content.begin() + static_cast<long>(span_start),
                 content.begin() + static_cast<long>(span_start + span_len));
      break;
    }
    case CorruptionMode::swap: {
      for (int attempt = 0; attempt < 100; ++attempt) {
        const std::size_t i = static_cast<std::size_t>(rng.below(n));
        std::size_t j = static_cast<std::size_t>(rng.below(n - 1));
        if (j >= i) ++j;
        if (content[i] == content[j]) continue;  // no-op swap, resample
        out = content;
        std::swap(out[i], out[j]);
        break;
      }
      if (out == content) throw Error("corrupt: swap cannot change an all-equal caption");
      break;
    }
    case CorruptionMode::substitute: {
      const auto pool = content_token_pool(vocab);
      if (pool.size() < 2) throw Error("corrupt: vocabulary too small for substitution");
      for (int attempt = 0; attempt < 100; ++attempt) {
        const std::size_t i = static_cast<std::size_t>(rng.below(n));
        const int tok = pool[static_cast<std::size_t>(rng.below(pool.size()))];
        if (tok == content[i]) continue;
        out = content;
        out[i] = tok;
        break;
      }
      if (out == content) throw Error("corrupt: substitution failed to change caption");
      break;
    }
    case CorruptionMode::drop: {
      const std::size_t k = 1 + static_cast<std::size_t>(rng.below(std::min<std::size_t>(2, n - 1)));
      std::vector<std::size_t> positions(n);
      for (std::size_t i = 0; i < n; ++i) positions[i] = i;
      rng.shuffle(positions);
      positions.resize(k);
      std::sort(positions.begin(), positions.end());
      out.clear();
      std::size_t next = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (next < positions.size() && positions[next] == i) {
          ++next;
          continue;
        }
        out.push_back(content[i]);
      }
      break;
    }
  }

  if (out == content && terminated == caption.complete()) {
    throw Error("corrupt: output equals source caption");
  }
  return TokenSequence::from_content_ids(vocab, out, terminated);
}

std::vector<NegativeSet> mine_self_negatives(const Dataset& dataset,
                                             const std::vector<int>& scene_ids,
                                             const Captioner& captioner_a,
                                             const Captioner& captioner_b,
                                             const std::string& a_ckpt_hash,
                                             const std::string& b_ckpt_hash,
                                             std::size_t threads) {
  if (captioner_a.params().content_hash() == captioner_b.params().content_hash()) {
    std::cerr << "[mine-negatives] warning: captioners A and B are identical; "
                 "z1 == z2 for every scene\n";
  }

  std::vector<NegativeSet> out(scene_ids.size());
  parallel_for(scene_ids.size(), threads, [&](std::size_t i) {
    const SceneInstance& scene = dataset.scene_by_id(scene_ids[i]);
    NegativeSet set;
    set.scene_id = scene.id;
    set.source_a = a_ckpt_hash;
    set.source_b = b_ckpt_hash;

    const auto mine_one = [&](const Captioner& cap, std::string& source) {
      const Mat memory = cap.encode(scene.features);
      TokenSequence seq = std::move(cap.greedy(memory).sequences.front());
      seq.text = dataset.vocab.decode(seq.ids);
      // Self-negatives must differ from every reference; on the rare
      // collision, fall back to a deterministic swap corruption.
      const auto collides = [&](const TokenSequence& s) {
        return std::any_of(
            scene.references.begin(), scene.references.end(),
            [&](const TokenSequence& ref) { return ref.content_ids() == s.content_ids(); });
      };
      for (std::uint64_t attempt = 0; collides(seq); ++attempt) {
        if (attempt >= 16) throw Error("mine_self_negatives: cannot decollide caption");
        seq = corrupt(seq, {CorruptionMode::swap, splitmix64(scene.seed ^ attempt)}, dataset.vocab);
        source += "+swap";
      }
      return seq;
    };

    set.z1 = mine_one(captioner_a, set.source_a);
    set.z2 = mine_one(captioner_b, set.source_b);
    out[i] = std::move(set);
  });
  return out;
}

void save_negatives(const std::filesystem::path& path, const std::vector<NegativeSet>& sets) {
  std::ostringstream out;
  for (const auto& s : sets) {
    json j;
    j["scene_id"] = s.scene_id;
    j["z1"] = s.z1.text;
    j["z2"] = s.z2.text;
    j["source"] = {{"a_ckpt_hash", s.source_a}, {"b_ckpt_hash", s.source_b}};
    out << j.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<NegativeSet> load_negatives(const std::filesystem::path& path,
                                        const Vocabulary& vocab) {
  std::vector<NegativeSet> sets;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    NegativeSet s;
    s.scene_id = j.at("scene_id").get<int>();
    s.z1 = TokenSequence::from_text(vocab, j.at("z1").get<std::string>(), true);
    s.z2 = TokenSequence::from_text(vocab, j.at("z2").get<std::string>(), true);
    s.source_a = j.at("source").at("a_ckpt_hash").get<std::string>();
    s.source_b = j.at("source").at("b_ckpt_hash").get<std::string>();
    sets.push_back(std::move(s));
  }
  return sets;
}

std::map<int, NegativeSet> negatives_by_scene(const std::vector<NegativeSet>& sets) {
  std::map<int, NegativeSet> out;
  for (const auto& s : sets) out[s.scene_id] = s;
  return out;
}

void save_corruptions(const std::filesystem::path& path,
                      const std::vector<CorruptionRecord>& recs) {
  std::ostringstream out;
  for (const auto& r : recs) {
    json j;
    j["scene_id"] = r.scene_id;
    j["mode"] = corruption_mode_name(r.mode);
    j["text"] = r.text;
    out << j.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<CorruptionRecord> load_corruptions(const std::filesystem::path& path) {
  std::vector<CorruptionRecord> recs;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    CorruptionRecord r;
    r.scene_id = j.at("scene_id").get<int>();
    r.mode = corruption_mode_from_name(j.at("mode").get<std::string>());
    r.text = j.at("text").get<std::string>();
    recs.push_back(std::move(r));
  }
  return recs;
}

}  // namespace caplab
