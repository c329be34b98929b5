#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace caplab {

struct StageRecord {
  std::string stage;
  std::string params;  // distinguishes variants (e.g. train-scst reward kind)
  std::map<std::string, std::string> inputs;   // relative path -> sha256
  std::map<std::string, std::string> outputs;  // relative path -> sha256
  std::string config_hash;
  std::string completed_utc;
  double duration_s = 0.0;
};

// Append-only record of completed stages, persisted as JSON under
// <run_dir>/manifest/manifest.json. A stage re-run with identical input
// hashes and intact outputs is a no-op; consumed artifacts are re-hashed
// at load so stale or tampered files are caught.
class RunManifest {
 public:
  static RunManifest open(const std::filesystem::path& run_dir);

  const StageRecord* find(const std::string& stage, const std::string& params = "") const;
  void record(StageRecord rec);  // replaces any previous (stage, params) entry
  bool outputs_intact(const StageRecord& rec) const;

  // Hash of an artifact as recorded by its producing stage, if any.
  std::optional<std::string> recorded_output_hash(const std::string& rel_path) const;

  const std::filesystem::path& run_dir() const { return run_dir_; }
  const std::vector<StageRecord>& records() const { return records_; }

 private:
  void save() const;

  std::filesystem::path run_dir_;
  std::vector<StageRecord> records_;
};

std::string utc_timestamp();

}  // namespace caplab
