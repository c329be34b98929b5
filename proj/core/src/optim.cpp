#include "caplab/nn/optim.hpp"

#include <cmath>
#include <fstream>

#include "caplab/util.hpp"

namespace caplab::nn {

Adam::Adam(std::vector<Param*> params, Options opts) : opts_(opts) {
  slots_.reserve(params.size());
  for (Param* p : params) {
    slots_.push_back({p, Mat::Zero(p->rows(), p->cols()), Mat::Zero(p->rows(), p->cols())});
  }
}

void Adam::step(double lr, const std::map<Param*, Mat>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    const auto it = grads.find(s.p);
    if (it == grads.end()) continue;
    const Mat& g = it->second;
    s.m = opts_.beta1 * s.m + (1.0 - opts_.beta1) * g;
    s.v = opts_.beta2 * s.v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
    const Mat mhat = s.m / bc1;
    const Mat vhat = s.v / bc2;
    s.p->value -= lr * (mhat.array() / (vhat.array().sqrt() + opts_.eps)).matrix();
    if (opts_.weight_decay > 0.0) {
      s.p->value -= lr * opts_.weight_decay * s.p->value;
    }
  }
}

void Adam::save_state(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write optimizer state: " + path.string());
  const std::uint64_t n = slots_.size();
  out.write(reinterpret_cast<const char*>(&t_), 8);
  out.write(reinterpret_cast<const char*>(&n), 8);
  for (const Slot& s : slots_) {
    const std::uint32_t len = static_cast<std::uint32_t>(s.p->name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(s.p->name.data(), len);
    out.write(reinterpret_cast<const char*>(s.m.data()),
              static_cast<std::streamsize>(s.m.size() * 8));
    out.write(reinterpret_cast<const char*>(s.v.data()),
              static_cast<std::streamsize>(s.v.size() * 8));
  }
  if (!out) throw Error("optimizer state write failed: " + path.string());
}

void Adam::load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open optimizer state: " + path.string());
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&t_), 8);
  in.read(reinterpret_cast<char*>(&n), 8);
  if (n != slots_.size()) throw Error("optimizer state slot count mismatch");
  for (Slot& s : slots_) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (name != s.p->name) throw Error("optimizer state param order mismatch: " + name);
    in.read(reinterpret_cast<char*>(s.m.data()), static_cast<std::streamsize>(s.m.size() * 8));
    in.read(reinterpret_cast<char*>(s.v.data()), static_cast<std::streamsize>(s.v.size() * 8));
  }
  if (!in) throw Error("truncated optimizer state: " + path.string());
}

void GradAccumulator::merge(const std::map<Param*, Mat>& grads) {
  for (const auto& [p, g] : grads) {
    auto it = sum_.find(p);
    if (it == sum_.end()) {
      sum_.emplace(p, g);
    } else {
      it->second += g;
    }
  }
}

bool GradAccumulator::finite() const {
  for (const auto& [_, g] : sum_) {
    if (!g.allFinite()) return false;
  }
  return true;
}

}  // namespace caplab::nn
