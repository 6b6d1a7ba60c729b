#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rsdpo {

// Append-only record of pipeline stages: config hash, input/output file
// checksums, wall-clock. Lives at <out_dir>/manifest.json.
struct StageRecord {
  std::string stage;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // path -> checksum
  std::map<std::string, std::string> outputs;  // path -> checksum
  long wall_ms = 0;
};

class RunManifest {
 public:
  explicit RunManifest(std::filesystem::path out_dir);

  void append(const StageRecord& record);
  const std::vector<StageRecord>& stages() const { return stages_; }

  // Throws if any referenced artifact is missing or fails its checksum.
  void verify() const;

  std::filesystem::path path() const;

 private:
  void load();
  void save() const;

  std::filesystem::path out_dir_;
  std::vector<StageRecord> stages_;
};

// Runs fn, checksums the outputs it declares, and appends one record.
class StageTimer {
 public:
  StageTimer(RunManifest& manifest, std::string stage,
             std::string config_hash);
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void commit();

 private:
  RunManifest& manifest_;
  StageRecord record_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace rsdpo
