#include "u2ad/trainer.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "u2ad/errors.hpp"

namespace u2ad {

Strategy strategy_from_int(int id) {
  if (id < 1 || id > 3) throw ConfigError("strategy must be 1, 2 or 3");
  return static_cast<Strategy>(id);
}

TrainCase make_train_case(std::string id, const CaseRecord& record, int patch_size) {
  return {std::move(id), record.image, record.roi_mask, build_patch_grid(record.roi_mask, patch_size),
          record.anomaly_mask};
}

void TrainSchedule::validate() const {
  if (pretrain_epochs < 0 || stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("schedule: negative epochs");
  if (refresh_interval < 1) throw ConfigError("schedule: refresh interval must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("schedule: tau must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("schedule: mask ratio must lie in (0, 1)");
  if (mc_samples < 2) throw ConfigError("schedule: K must be >= 2");
  if (batch_size < 1) throw ConfigError("schedule: batch size must be >= 1");
  if (!(adam.lr > 0.0) || !(adapt_adam.lr > 0.0)) throw ConfigError("schedule: learning rate must be positive");
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::kPretrain: return "pretrain";
    case Phase::kStage1: return "stage1";
    case Phase::kStage2: return "stage2";
  }
  return "?";
}

std::vector<UncertaintyMaps> refresh_maps(const Network<float>& net, const ModelParams& params,
                                          const std::vector<TrainCase>& cases, double ratio, int K, Rng& rng) {
  std::vector<UncertaintyMaps> maps;
  maps.reserve(cases.size());
  for (const auto& c : cases) {
    const auto predictor = make_predictor(net, params, c.image, c.roi, c.grid);
    maps.push_back(uncertainty_maps(predictor, c.image, c.roi, c.grid, ratio, K, rng));
  }
  return maps;
}

namespace {

using PlanFn = std::function<MaskPlan(std::size_t case_index, Rng& rng)>;

Image scatter_target_grad(const MatrixT<float>& grad, const MaskPlan& plan, const PatchGrid& grid) {
  Image out(grid.image_height, grid.image_width, 0.0);
  const int ps = grid.patch_size;
  for (std::size_t k = 0; k < plan.masked.size(); ++k) {
    const auto& o = grid.origins[static_cast<std::size_t>(plan.masked[k])];
    for (int r = 0; r < ps; ++r) {
      for (int c = 0; c < ps; ++c) out(o.row + r, o.col + c) = grad(static_cast<Eigen::Index>(k), r * ps + c);
    }
  }
  return out;
}

/// One pass over `cases` in shuffled minibatches; returns the mean batch loss.
double run_epoch(const Network<float>& net, TrainState& st, const std::vector<TrainCase>& cases,
                 const TrainSchedule& schedule, Phase phase, int epoch, double lr, const PlanFn& make_plan,
                 const TrainObserver& obs) {
  std::vector<std::size_t> order(cases.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), st.rng);

  double loss_sum = 0.0;
  int batches = 0;
  const auto bs = static_cast<std::size_t>(schedule.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    std::vector<MaskedSample<float>> batch;
    std::vector<MaskPlan> plans;
    std::vector<std::size_t> members;
    for (std::size_t b = start; b < end; ++b) {
      const std::size_t ci = order[b];
      const TrainCase& c = cases[ci];
      const Image input = schedule.augment ? augment(c.image, st.rng, schedule.augmentation) : c.image;
      MaskPlan plan = make_plan(ci, st.rng);
      if (obs.on_plan) obs.on_plan(phase, epoch, ci, plan);
      batch.push_back(gather_sample<float>(roi_image(input, c.roi), c.grid, plan, true));
      plans.push_back(std::move(plan));
      members.push_back(ci);
    }
    TargetGradHook hook;
    if (obs.on_target_grad) {
      hook = [&](std::size_t i, const MaskedSample<float>&, const MatrixT<float>& g) {
        const std::size_t ci = members[i];
        obs.on_target_grad(phase, epoch, ci, plans[i], scatter_target_grad(g, plans[i], cases[ci].grid));
      };
    }
    loss_sum += train_step(net, st.params, batch, st.adam, phase == Phase::kPretrain ? schedule.adam : schedule.adapt_adam,
                           lr, hook);
    ++batches;
  }
  return batches ? loss_sum / batches : 0.0;
}

double mean_over_cases(const std::vector<UncertaintyMaps>& maps, const std::vector<TrainCase>& cases,
                       Image UncertaintyMaps::*field) {
  double sum = 0.0;
  for (std::size_t i = 0; i < maps.size(); ++i) sum += roi_mean(maps[i].*field, cases[i].roi);
  return maps.empty() ? 0.0 : sum / static_cast<double>(maps.size());
}

void anomaly_split(const std::vector<UncertaintyMaps>& maps, const std::vector<TrainCase>& cases, EpochRecord& rec) {
  double in = 0.0, out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (!cases[i].anomaly_mask) continue;
    const Mask& m = *cases[i].anomaly_mask;
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (!cases[i].roi[k]) continue;
      if (m[k]) {
        in += maps[i].au[k];
        ++n_in;
      } else {
        out += maps[i].au[k];
        ++n_out;
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.au_inside = n_in ? in / static_cast<double>(n_in) : nan;
  rec.au_outside = n_out ? out / static_cast<double>(n_out) : nan;
}

/// Shared loop for both adaptation stages: refresh maps at stage entry and every Q epochs.
void run_stage(const Network<float>& net, TrainState& st, const std::vector<TrainCase>& cases,
               const TrainSchedule& schedule, Phase phase, int epochs, int lr_offset, const TrainObserver& obs,
               std::vector<EpochRecord>& history) {
  std::vector<UncertaintyMaps> maps;
  for (int e = 0; e < epochs; ++e) {
    EpochRecord rec;
    rec.phase = phase;
    rec.epoch = e;
    if (e % schedule.refresh_interval == 0) {
      maps = refresh_maps(net, st.params, cases, schedule.ratio, schedule.mc_samples, st.rng);
      rec.refreshed = true;
      rec.mean_eu = mean_over_cases(maps, cases, &UncertaintyMaps::eu);
      rec.mean_au = mean_over_cases(maps, cases, &UncertaintyMaps::au);
      anomaly_split(maps, cases, rec);
      if (obs.on_refresh) obs.on_refresh(phase, e, maps);
    }
    PlanFn plan_fn;
    if (phase == Phase::kStage1) {
      plan_fn = [&](std::size_t ci, Rng& rng) {
        const auto& c = cases[ci];
        return eu_guided_plan(c.grid, maps[ci].eu, c.roi, schedule.tau, schedule.ratio, rng);
      };
    } else {
      plan_fn = [&](std::size_t ci, Rng& rng) {
        const auto& c = cases[ci];
        return au_exclusion_plan(c.grid, maps[ci].au, c.roi, schedule.ratio, rng, schedule.au_exclusion);
      };
    }
    rec.lr = learning_rate(schedule.adapt_adam, lr_offset + e);
    rec.loss = run_epoch(net, st, cases, schedule, phase, e, rec.lr, plan_fn, obs);
    history.push_back(rec);
    if (obs.on_epoch) obs.on_epoch(rec);
  }
}

void check_cases(const std::vector<TrainCase>& cases, const ModelConfig& cfg, const char* what) {
  if (cases.empty()) throw ConfigError(std::string(what) + ": training set is empty");
  for (const auto& c : cases) {
    if (!c.image.same_shape(cfg.image_height, cfg.image_width) || c.grid.patch_size != cfg.patch_size) {
      throw ConfigError(std::string(what) + ": case " + c.id + " does not match the model geometry");
    }
  }
}

}  // namespace

TrainResult pretrain(ModelParams init, const std::vector<TrainCase>& healthy, const TrainSchedule& schedule, Rng& rng,
                     const TrainObserver& obs) {
  schedule.validate();
  TrainResult result;
  if (schedule.pretrain_epochs == 0) {
    result.params = std::move(init);
    return result;
  }
  check_cases(healthy, init.config, "pretrain");
  const Network<float> net(init.config);
  TrainState st{std::move(init), {}, rng};
  st.adam = init_adam(st.params.values.size());
  const PlanFn plan_fn = [&](std::size_t ci, Rng& r) { return random_mask_plan(healthy[ci].grid, schedule.ratio, r); };
  for (int e = 0; e < schedule.pretrain_epochs; ++e) {
    EpochRecord rec;
    rec.phase = Phase::kPretrain;
    rec.epoch = e;
    rec.lr = learning_rate(schedule.adam, e);
    rec.loss = run_epoch(net, st, healthy, schedule, Phase::kPretrain, e, rec.lr, plan_fn, obs);
    result.history.push_back(rec);
    if (obs.on_epoch) obs.on_epoch(rec);
  }
  rng = st.rng;
  result.params = std::move(st.params);
  return result;
}

TrainResult adapt(ModelParams init, const std::vector<TrainCase>& target, const TrainSchedule& schedule, Rng& rng,
                  const TrainObserver& obs) {
  schedule.validate();
  TrainResult result;
  if (schedule.stage1_epochs + schedule.stage2_epochs == 0) {
    result.params = std::move(init);
    return result;
  }
  check_cases(target, init.config, "adapt");
  const Network<float> net(init.config);
  TrainState st{std::move(init), {}, rng};
  st.adam = init_adam(st.params.values.size());
  run_stage(net, st, target, schedule, Phase::kStage1, schedule.stage1_epochs, 0, obs, result.history);
  result.stage1_snapshot = st;
  if (obs.on_stage1_end) obs.on_stage1_end(st);
  run_stage(net, st, target, schedule, Phase::kStage2, schedule.stage2_epochs, schedule.stage1_epochs, obs,
            result.history);
  rng = st.rng;
  result.params = std::move(st.params);
  return result;
}

TrainResult resume_stage2(const TrainState& snapshot, const std::vector<TrainCase>& target,
                          const TrainSchedule& schedule, const TrainObserver& obs) {
  schedule.validate();
  check_cases(target, snapshot.params.config, "adapt");
  const Network<float> net(snapshot.params.config);
  TrainState st = snapshot;
  TrainResult result;
  result.stage1_snapshot = snapshot;
  run_stage(net, st, target, schedule, Phase::kStage2, schedule.stage2_epochs, schedule.stage1_epochs, obs,
            result.history);
  result.params = std::move(st.params);
  return result;
}

TrainResult run_strategy(Strategy strategy, const ModelConfig& cfg, const std::vector<TrainCase>& healthy,
                         const std::vector<TrainCase>& target, const TrainSchedule& schedule, Rng& rng,
                         const TrainObserver& obs) {
  if (strategy != Strategy::kAdaptOnly && healthy.empty()) throw ConfigError("strategy needs a healthy set");
  if (strategy != Strategy::kPretrainOnly && target.empty()) throw ConfigError("strategy needs a target set");
  ModelParams init = init_model(cfg, rng);
  switch (strategy) {
    case Strategy::kPretrainOnly:
      return pretrain(std::move(init), healthy, schedule, rng, obs);
    case Strategy::kAdaptOnly:
      return adapt(std::move(init), target, schedule, rng, obs);
    case Strategy::kPretrainAdapt: {
      TrainResult pre = pretrain(std::move(init), healthy, schedule, rng, obs);
      TrainResult ada = adapt(std::move(pre.params), target, schedule, rng, obs);
      pre.history.insert(pre.history.end(), ada.history.begin(), ada.history.end());
      ada.history = std::move(pre.history);
      return ada;
    }
  }
  throw ConfigError("unknown strategy");
}

}  // namespace u2ad
