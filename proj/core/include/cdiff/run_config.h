#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cdiff/contrastive.h"
#include "cdiff/dataset.h"
#include "cdiff/evaluation.h"
#include "cdiff/models.h"
#include "cdiff/planner.h"
#include "cdiff/training.h"

namespace cdiff {

// Merged view of every module config plus run-level settings (command,
// paths, data generation and analysis options). Serializes to sorted
// key=value lines; the fingerprint is a hash of that text.
struct RunConfig {
  ModelConfig model;
  ContrastiveConfig contrast;
  TrainConfig train;
  PlannerConfig planner;
  ReturnConfig returns;
  EvalConfig eval;
  std::map<std::string, std::string> run;

  // Throws ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  bool has_run(const std::string& key) const { return run.count(key) != 0; }

  std::string serialize() const;
  std::string fingerprint() const;

  // Blank lines and lines starting with '#' are ignored.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Keys accepted by set(), in serialization order.
  static std::vector<std::string> keys();
};

}  // namespace cdiff
