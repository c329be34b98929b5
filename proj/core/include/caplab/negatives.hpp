#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "caplab/captioner.hpp"
#include "caplab/data.hpp"

namespace caplab {

// Hard-negative pair for one scene: greedy captions from two differently
// rewarded captioners, with checkpoint provenance.
struct NegativeSet {
  int scene_id = -1;
  TokenSequence z1;  // from captioner A
  TokenSequence z2;  // from captioner B
  std::string source_a;
  std::string source_b;
};

enum class CorruptionMode { truncate, repeat_final, duplicate_concept, swap, substitute, drop };

const char* corruption_mode_name(CorruptionMode mode);
CorruptionMode corruption_mode_from_name(const std::string& name);

struct CorruptionSpec {
  CorruptionMode mode;
  std::uint64_t seed = 0;
};

// Manually corrupted caption emulating typical degenerate outputs:
// premature truncation, trailing-word repetition, duplicated clauses,
// word swaps/substitutions/drops. Output always differs from the source
// (the RNG is resampled on collision). Requires >= 3 content tokens.
TokenSequence corrupt(const TokenSequence& caption, const CorruptionSpec& spec,
                      const Vocabulary& vocab);

struct CorruptionRecord {
  int scene_id = -1;
  CorruptionMode mode;
  std::string text;
};

// Greedy-decodes one caption per captioner per scene. Captions that
// never terminate are truncated at max_len and kept (that is exactly the
// pathology worth mining). A mined caption colliding with one of the
// scene's references is deterministically swap-corrupted and tagged.
std::vector<NegativeSet> mine_self_negatives(const Dataset& dataset,
                                             const std::vector<int>& scene_ids,
                                             const Captioner& captioner_a,
                                             const Captioner& captioner_b,
                                             const std::string& a_ckpt_hash,
                                             const std::string& b_ckpt_hash,
                                             std::size_t threads = 1);

void save_negatives(const std::filesystem::path& path, const std::vector<NegativeSet>& sets);
std::vector<NegativeSet> load_negatives(const std::filesystem::path& path, const Vocabulary& vocab);
std::map<int, NegativeSet> negatives_by_scene(const std::vector<NegativeSet>& sets);

void save_corruptions(const std::filesystem::path& path, const std::vector<CorruptionRecord>& recs);
std::vector<CorruptionRecord> load_corruptions(const std::filesystem::path& path);

}  // namespace caplab
