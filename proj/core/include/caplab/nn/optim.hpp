#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "caplab/nn/params.hpp"

namespace caplab::nn {

// Adam with optional decoupled weight decay (AdamW when decay > 0).
// State is keyed by parameter name so it can be checkpointed and training
// resumed with a bitwise-identical trajectory.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; applied to trainable params only
  };

  explicit Adam(std::vector<Param*> params) : Adam(std::move(params), Options()) {}
  Adam(std::vector<Param*> params, Options opts);

  // Applies accumulated gradients; `grads` maps parameters to gradient
  // sums for this step. Params without an entry are left untouched.
  void step(double lr, const std::map<Param*, Mat>& grads);

  std::uint64_t steps_taken() const { return t_; }

  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  struct Slot {
    Param* p;
    Mat m;
    Mat v;
  };
  std::vector<Slot> slots_;
  Options opts_;
  std::uint64_t t_ = 0;
};

// Accumulates per-graph gradient contributions into a single map, in the
// order merge() is called. Call order must be deterministic (scene order).
class GradAccumulator {
 public:
  void merge(const std::map<Param*, Mat>& grads);
  const std::map<Param*, Mat>& grads() const { return sum_; }
  void clear() { sum_.clear(); }
  bool finite() const;

 private:
  std::map<Param*, Mat> sum_;
};

}  // namespace caplab::nn
