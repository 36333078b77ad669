#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "u2ad/model.hpp"

namespace u2ad {

/// Model weights plus enough optimizer and RNG state to continue training bit-exactly.
struct Checkpoint {
  ModelParams params;
  std::optional<AdamState> adam;
  std::string phase;      ///< "pretrain", "stage1", "stage2", ...
  int epoch = 0;          ///< epochs completed within the phase
  std::string rng_state;  ///< empty when not resumable
  std::string run_config; ///< JSON snapshot of the run configuration, may be empty
};

/// File layout: "U2ADCKPT\n", u64 header length, JSON header, float32 parameters,
/// then optional float32 Adam m and v. All integers little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws IoError on a missing, truncated or corrupt file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace u2ad
