#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "u2ad/model.hpp"
#include "u2ad/patching.hpp"
#include "u2ad/phantom.hpp"
#include "u2ad/uncertainty.hpp"

namespace u2ad {

enum class Strategy { kPretrainOnly = 1, kAdaptOnly = 2, kPretrainAdapt = 3 };

/// Throws ConfigError for values outside {1, 2, 3}.
Strategy strategy_from_int(int id);

/// One training image with its precomputed patch grid.
struct TrainCase {
  std::string id;
  Image image;
  Mask roi;
  PatchGrid grid;
  std::optional<Mask> anomaly_mask;  ///< audit only, never read by training
};

TrainCase make_train_case(std::string id, const CaseRecord& record, int patch_size);

struct TrainSchedule {
  int pretrain_epochs = 200;
  int stage1_epochs = 150;
  int stage2_epochs = 50;
  int refresh_interval = 10;  ///< Q
  double tau = 1.0;
  double ratio = 0.75;
  int mc_samples = 10;  ///< K
  int batch_size = 8;
  AdamConfig adam;        ///< pretraining optimizer
  AdamConfig adapt_adam;  ///< adaptation optimizer (both stages share one decay schedule)
  bool augment = true;
  AugmentConfig augmentation;
  AuExclusionOptions au_exclusion;

  void validate() const;
};

enum class Phase { kPretrain, kStage1, kStage2 };

const char* phase_name(Phase phase);

struct EpochRecord {
  Phase phase = Phase::kPretrain;
  int epoch = 0;  ///< zero-based within the phase
  double loss = 0.0;
  double lr = 0.0;
  bool refreshed = false;
  double mean_eu = 0.0;  ///< over all ROI pixels at this epoch's refresh; 0 if none
  double mean_au = 0.0;
  /// Mean AU inside and outside the anomaly masks of cases that carry one; NaN otherwise.
  double au_inside = std::numeric_limits<double>::quiet_NaN();
  double au_outside = std::numeric_limits<double>::quiet_NaN();
};

/// Resumable training state at a phase boundary.
struct TrainState {
  ModelParams params;
  AdamState adam;
  Rng rng;
};

/// Optional callbacks for logging and audits. Every callback runs on the training thread.
struct TrainObserver {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(Phase, int epoch, std::size_t case_index, const MaskPlan&)> on_plan;
  std::function<void(Phase, int epoch, const std::vector<UncertaintyMaps>&)> on_refresh;
  /// dLoss/d(reconstruction target) scattered onto the image grid; zero outside masked patches.
  std::function<void(Phase, int epoch, std::size_t case_index, const MaskPlan&, const Image&)> on_target_grad;
  std::function<void(const TrainState&)> on_stage1_end;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::optional<TrainState> stage1_snapshot;
};

/// Random-masking reconstruction training from `init`.
TrainResult pretrain(ModelParams init, const std::vector<TrainCase>& healthy, const TrainSchedule& schedule, Rng& rng,
                     const TrainObserver& observer = {});

/// Two-stage uncertainty-guided adaptation: EU-guided masking, then AU-guided exclusion.
TrainResult adapt(ModelParams init, const std::vector<TrainCase>& target, const TrainSchedule& schedule, Rng& rng,
                  const TrainObserver& observer = {});

/// Runs stage 2 from a stage-1 snapshot; reproduces the tail of the matching `adapt` call.
TrainResult resume_stage2(const TrainState& snapshot, const std::vector<TrainCase>& target,
                          const TrainSchedule& schedule, const TrainObserver& observer = {});

/// Strategy 1 trains on `healthy` only, 2 on `target` only from a fresh init, 3 pretrains then adapts.
TrainResult run_strategy(Strategy strategy, const ModelConfig& cfg, const std::vector<TrainCase>& healthy,
                         const std::vector<TrainCase>& target, const TrainSchedule& schedule, Rng& rng,
                         const TrainObserver& observer = {});

/// Uncertainty maps for every case under frozen params, computed on the un-augmented images.
std::vector<UncertaintyMaps> refresh_maps(const Network<float>& net, const ModelParams& params,
                                          const std::vector<TrainCase>& cases, double ratio, int K, Rng& rng);

}  // namespace u2ad
