#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "caplab/nn/graph.hpp"
#include "caplab/rng.hpp"

namespace caplab::nn {

// Ordered, name-addressed parameter collection. Map ordering gives every
// consumer (optimizer, checkpoint writer, hashing) the same deterministic
// iteration order.
class ParamStore {
 public:
  Param& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  void erase(const std::string& name);

  std::vector<Param*> all();
  std::vector<Param*> trainable();
  std::vector<const Param*> all() const;

  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count(bool trainable_only = false) const;

  // SHA-256 over names, shapes and raw values; detects any mutation.
  std::string content_hash() const;

 private:
  std::map<std::string, std::unique_ptr<Param>> params_;
};

namespace init {
void xavier_uniform(Param& p, std::uint64_t seed);
void gaussian(Param& p, std::uint64_t seed, double stddev);
void constant(Param& p, double v);
}  // namespace init

// ---------------------------------------------------------------------------
// Checkpoint format (binary, little-endian):
//   magic "CPCK" | u32 version | string stage | string config_hash |
//   u64 n_params | n x { string name, u64 rows, u64 cols, f64 data col-major }
// Loading into an existing store requires the exact same parameter names
// and shapes, and rejects a config_hash mismatch unless expected is empty.
// ---------------------------------------------------------------------------
struct CheckpointHeader {
  std::uint32_t version = 0;
  std::string stage;
  std::string config_hash;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& stage, const std::string& config_hash);
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParamStore& store,
                                 const std::string& expected_config_hash);
CheckpointHeader peek_checkpoint(const std::filesystem::path& path);

}  // namespace caplab::nn
