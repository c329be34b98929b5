#include "caplab/manifest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>

#include "caplab/hash.hpp"
#include "caplab/util.hpp"

namespace caplab {

using json = nlohmann::ordered_json;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest RunManifest::open(const std::filesystem::path& run_dir) {
  RunManifest m;
  m.run_dir_ = run_dir;
  const auto file = run_dir / "manifest" / "manifest.json";
  if (std::filesystem::exists(file)) {
    const json j = json::parse(read_file(file));
    for (const auto& r : j.at("entries")) {
      StageRecord rec;
      rec.stage = r.at("stage").get<std::string>();
      rec.params = r.value("params", "");
      for (const auto& [k, v] : r.at("inputs").items()) rec.inputs[k] = v.get<std::string>();
      for (const auto& [k, v] : r.at("outputs").items()) rec.outputs[k] = v.get<std::string>();
      rec.config_hash = r.value("config_hash", "");
      rec.completed_utc = r.value("completed_utc", "");
      rec.duration_s = r.value("duration_s", 0.0);
      m.records_.push_back(std::move(rec));
    }
  }
  return m;
}

void RunManifest::save() const {
  json entries = json::array();
  for (const auto& r : records_) {
    json inputs, outputs;
    for (const auto& [k, v] : r.inputs) inputs[k] = v;
    for (const auto& [k, v] : r.outputs) outputs[k] = v;
    entries.push_back({{"stage", r.stage},
                       {"params", r.params},
                       {"inputs", inputs.is_null() ? json::object() : inputs},
                       {"outputs", outputs.is_null() ? json::object() : outputs},
                       {"config_hash", r.config_hash},
                       {"completed_utc", r.completed_utc},
                       {"duration_s", r.duration_s}});
  }
  json j;
  j["version"] = 1;
  j["entries"] = entries;
  write_file(run_dir_ / "manifest" / "manifest.json", j.dump(2) + "\n");
}

const StageRecord* RunManifest::find(const std::string& stage, const std::string& params) const {
  for (const auto& r : records_) {
    if (r.stage == stage && r.params == params) return &r;
  }
  return nullptr;
}

void RunManifest::record(StageRecord rec) {
  records_.erase(std::remove_if(records_.begin(), records_.end(),
                                [&](const StageRecord& r) {
                                  return r.stage == rec.stage && r.params == rec.params;
                                }),
                 records_.end());
  records_.push_back(std::move(rec));
  save();
}

bool RunManifest::outputs_intact(const StageRecord& rec) const {
  for (const auto& [rel, hash] : rec.outputs) {
    const auto path = run_dir_ / rel;
    if (!std::filesystem::exists(path) || sha256_file(path) != hash) return false;
  }
  return true;
}

std::optional<std::string> RunManifest::recorded_output_hash(const std::string& rel_path) const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const auto found = it->outputs.find(rel_path);
    if (found != it->outputs.end()) return found->second;
  }
  return std::nullopt;
}

}  // namespace caplab
