#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "u2ad/detection.hpp"
#include "u2ad/network.hpp"
#include "u2ad/phantom.hpp"
#include "u2ad/trainer.hpp"

namespace u2ad {

struct CorpusConfig {
  PhantomConfig healthy;  ///< pretraining domain
  PhantomConfig target;   ///< adaptation and test domain
  int healthy_count = 200;
  int target_count = 40;
  double prevalence = 0.30;
  int max_anomalies = 3;
};

struct EvalConfig {
  int folds = 5;
  int repeats = 20;
  double target_sensitivity = 0.90;
  std::vector<int> k_values{3, 10, 20};
  std::vector<double> noise_vars{0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<int> downsample_factors{1, 2, 4};
};

struct IoConfig {
  std::uint64_t seed = 0;
  bool save_maps = false;
  std::string data_dir;  ///< empty means <run-dir>/data
};

/// Every tunable of a run. JSON sections: phantom, model, schedule, uncertainty,
/// detection, eval, io.
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;  ///< image size follows corpus geometry
  TrainSchedule schedule;
  int strategy = 3;
  DetectionConfig detection;
  EvalConfig eval;
  IoConfig io;

  /// Throws ConfigError.
  void validate() const;
};

/// Desk-scale defaults; uncertainty and detection values follow the method's published settings.
RunConfig default_config();

/// Overlays `text` (a JSON object) on the defaults. Unknown keys and type mismatches throw ConfigError.
RunConfig parse_config(const std::string& text);

/// Canonical JSON (sorted keys, two-space indent).
std::string dump_config(const RunConfig& cfg);

/// Applies overrides of the form U2AD_SECTION__KEY=value (nested keys joined by "__",
/// matched case-insensitively). Values are parsed as JSON, falling back to a string.
RunConfig apply_env_overrides(const RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& env);

/// U2AD_* variables of the current process.
std::vector<std::pair<std::string, std::string>> process_env_overrides();

/// Defaults, then the file (if any), then the environment.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, bool use_env = true);

std::uint64_t config_digest(const RunConfig& cfg);

}  // namespace u2ad
