#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "u2ad/config.hpp"
#include "u2ad/robustness.hpp"

namespace u2ad {

/// Run directory layout:
///   config.json                      snapshot of the effective configuration
///   data/index.json, data/{healthy,target}/<case>/   generated corpus (unless io.data_dir is set)
///   checkpoints/{pretrain,stage1,final}.ckpt
///   history.jsonl, plans.jsonl       append-only training and mask-plan logs
///   maps/epoch_<n>/<case>/{au,eu}.f32 + manifest.json   (io.save_maps)
///   reports/<case>/{report.json,ano_map.f32}, reports/scores.csv
///   eval/{patient_cv.csv,segment_cv.csv,decisions.csv,summary.json}
///   sweep/{k.csv,robustness.csv}
///   plots/*.ppm with JSON sidecars
///   stamps/<command>.json            completion stamps keyed by config and inputs
struct RunContext {
  std::filesystem::path run_dir;
  RunConfig config;
  std::ostream* log = nullptr;  ///< progress messages; null silences them
};

/// Exclusive writer lock on a run directory, released on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

std::filesystem::path data_dir(const RunContext& ctx);

void cmd_gen_data(const RunContext& ctx);
void cmd_pretrain(const RunContext& ctx);
void cmd_adapt(const RunContext& ctx);
void cmd_detect(const RunContext& ctx);
void cmd_eval(const RunContext& ctx);
void cmd_sweep(const RunContext& ctx);
void cmd_plot(const RunContext& ctx);

/// Cases of one split ("healthy" or "target") from the corpus index.
std::vector<CorpusCase> load_split(const RunContext& ctx, const std::string& split);

}  // namespace u2ad
