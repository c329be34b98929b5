#include "caplab/nn/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "caplab/hash.hpp"
#include "caplab/util.hpp"

namespace caplab::nn {

Param& ParamStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (params_.count(name)) throw Error("param already exists: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  Param& ref = *p;
  params_.emplace(name, std::move(p));
  return ref;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("no such param: " + name);
  return *it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("no such param: " + name);
  return *it->second;
}

void ParamStore::erase(const std::string& name) {
  if (params_.erase(name) == 0) throw Error("no such param: " + name);
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& [_, p] : params_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (const auto& [_, p] : params_) out.push_back(p.get());
  return out;
}

std::vector<Param*> ParamStore::trainable() {
  std::vector<Param*> out;
  for (auto& [_, p] : params_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) {
    if (!trainable_only || p->trainable) n += static_cast<std::size_t>(p->size());
  }
  return n;
}

std::string ParamStore::content_hash() const {
  std::string bytes;
  for (const auto& [name, p] : params_) {
    bytes += name;
    const std::uint64_t dims[2] = {static_cast<std::uint64_t>(p->rows()),
                                   static_cast<std::uint64_t>(p->cols())};
    bytes.append(reinterpret_cast<const char*>(dims), sizeof(dims));
    bytes.append(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::size_t>(p->size()) * sizeof(double));
  }
  return sha256_hex(bytes);
}

namespace init {

void xavier_uniform(Param& p, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ fnv1a64(p.name)));
  const double bound = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) p.value(i, j) = rng.uniform(-bound, bound);
  }
}

void gaussian(Param& p, std::uint64_t seed, double stddev) {
  Rng rng(splitmix64(seed ^ fnv1a64(p.name)));
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) p.value(i, j) = rng.gauss(0.0, stddev);
  }
}

void constant(Param& p, double v) { p.value.setConstant(v); }

}  // namespace init

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_str(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

constexpr char kMagic[4] = {'C', 'P', 'C', 'K'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& stage, const std::string& config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_str(out, stage);
  put_str(out, config_hash);
  const auto params = store.all();
  put_u64(out, params.size());
  for (const Param* p : params) {
    put_str(out, p->name);
    put_u64(out, static_cast<std::uint64_t>(p->rows()));
    put_u64(out, static_cast<std::uint64_t>(p->cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->size()) * static_cast<std::streamsize>(sizeof(double)));
  }
  if (!out) throw Error("checkpoint write failed: " + path.string());
}

namespace {

CheckpointHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error("not a checkpoint file: " + path.string());
  }
  CheckpointHeader h;
  h.version = get_u32(in);
  if (h.version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(h.version) + " in " + path.string());
  }
  h.stage = get_str(in);
  h.config_hash = get_str(in);
  return h;
}

}  // namespace

CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParamStore& store,
                                 const std::string& expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  CheckpointHeader h = read_header(in, path);
  if (!expected_config_hash.empty() && h.config_hash != expected_config_hash) {
    throw Error("checkpoint config-hash mismatch for " + path.string() + ": file has " +
                h.config_hash + ", expected " + expected_config_hash);
  }
  const std::uint64_t n = get_u64(in);
  if (n != store.count()) {
    throw Error("checkpoint param count mismatch for " + path.string());
  }
  for (std::uint64_t k = 0; k < n; ++k) {
    const std::string name = get_str(in);
    const auto rows = static_cast<Eigen::Index>(get_u64(in));
    const auto cols = static_cast<Eigen::Index>(get_u64(in));
    Param& p = store.at(name);
    if (p.rows() != rows || p.cols() != cols) {
      throw Error("checkpoint shape mismatch for param " + name);
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.size()) * static_cast<std::streamsize>(sizeof(double)));
  }
  if (!in) throw Error("truncated checkpoint: " + path.string());
  return h;
}

CheckpointHeader peek_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  return read_header(in, path);
}

}  // namespace caplab::nn
