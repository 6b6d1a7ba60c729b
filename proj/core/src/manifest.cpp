#include "rsdpo/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "rsdpo/serialize.hpp"

namespace rsdpo {

using nlohmann::json;

RunManifest::RunManifest(std::filesystem::path out_dir)
    : out_dir_(std::move(out_dir)) {
  std::filesystem::create_directories(out_dir_);
  load();
}

std::filesystem::path RunManifest::path() const {
  return out_dir_ / "manifest.json";
}

void RunManifest::load() {
  std::ifstream in(path());
  if (!in) return;
  json j = json::parse(in);
  for (const auto& s : j.at("stages")) {
    StageRecord rec;
    rec.stage = s.at("stage").get<std::string>();
    rec.config_hash = s.at("config_hash").get<std::string>();
    rec.wall_ms = s.at("wall_ms").get<long>();
    for (const auto& [k, v] : s.at("inputs").items()) {
      rec.inputs[k] = v.get<std::string>();
    }
    for (const auto& [k, v] : s.at("outputs").items()) {
      rec.outputs[k] = v.get<std::string>();
    }
    stages_.push_back(std::move(rec));
  }
}

void RunManifest::save() const {
  json stages = json::array();
  for (const auto& rec : stages_) {
    stages.push_back({{"stage", rec.stage},
                      {"config_hash", rec.config_hash},
                      {"inputs", rec.inputs},
                      {"outputs", rec.outputs},
                      {"wall_ms", rec.wall_ms}});
  }
  std::ofstream out(path());
  if (!out) {
    throw std::runtime_error("cannot write manifest: " + path().string());
  }
  out << json{{"stages", stages}}.dump(2) << '\n';
}

void RunManifest::append(const StageRecord& record) {
  stages_.push_back(record);
  save();
}

void RunManifest::verify() const {
  for (const auto& rec : stages_) {
    for (const auto& [file, checksum] : rec.outputs) {
      std::filesystem::path p(file);
      if (!std::filesystem::exists(p)) {
        throw std::runtime_error("manifest artifact missing: " + file);
      }
      if (file_checksum(p) != checksum) {
        throw std::runtime_error("manifest checksum mismatch: " + file);
      }
    }
  }
}

StageTimer::StageTimer(RunManifest& manifest, std::string stage,
                       std::string config_hash)
    : manifest_(manifest), start_(std::chrono::steady_clock::now()) {
  record_.stage = std::move(stage);
  record_.config_hash = std::move(config_hash);
}

void StageTimer::add_input(const std::filesystem::path& path) {
  record_.inputs[path.string()] = file_checksum(path);
}

void StageTimer::add_output(const std::filesystem::path& path) {
  record_.outputs[path.string()] = file_checksum(path);
}

void StageTimer::commit() {
  record_.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
  manifest_.append(record_);
}

}  // namespace rsdpo
