#include "u2ad/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "u2ad/checkpoint.hpp"
#include "u2ad/dataset_io.hpp"
#include "u2ad/errors.hpp"
#include "u2ad/plot.hpp"

namespace u2ad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Salt : std::uint64_t {
  kSaltHealthy = 1,
  kSaltTarget = 2,
  kSaltPrevalence = 3,
  kSaltInit = 4,
  kSaltPretrain = 5,
  kSaltAdapt = 6,
  kSaltDetect = 7,
  kSaltEval = 8,
  kSaltAnomaly = 9,
};

void say(const RunContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << '\n' << std::flush;
}

std::uint64_t seed_for(const RunContext& ctx, Salt salt) { return mix_seed(ctx.config.io.seed, salt); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string case_name(const std::string& split, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d", split.c_str(), i);
  return buf;
}

std::string file_digest(const fs::path& path) {
  const std::string bytes = read_text_file(path);
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

/// Digest of selected config sections plus extra inputs; keys completion stamps.
std::string stamp_key(const RunContext& ctx, const std::vector<std::string>& sections,
                      const std::vector<std::string>& extra = {}, bool drop_strategy = false) {
  const json all = json::parse(dump_config(ctx.config));
  json picked = json::object();
  for (const auto& s : sections) picked[s] = all.at(s);
  if (drop_strategy && picked.contains("schedule")) picked["schedule"].erase("strategy");
  picked["io"] = {{"seed", ctx.config.io.seed}};
  picked["extra"] = extra;
  const std::string text = picked.dump();
  return hex64(fnv1a(text.data(), text.size()));
}

fs::path stamp_path(const RunContext& ctx, const std::string& cmd) { return ctx.run_dir / "stamps" / (cmd + ".json"); }

bool stamp_matches(const RunContext& ctx, const std::string& cmd, const std::string& key) {
  const fs::path p = stamp_path(ctx, cmd);
  if (!fs::exists(p)) return false;
  try {
    return json::parse(read_text_file(p)).at("key").get<std::string>() == key;
  } catch (const json::exception&) {
    return false;
  }
}

void write_stamp(const RunContext& ctx, const std::string& cmd, const std::string& key) {
  write_text_file(stamp_path(ctx, cmd), json{{"command", cmd}, {"key", key}}.dump() + "\n");
}

void snapshot_config(const RunContext& ctx) {
  fs::create_directories(ctx.run_dir);
  write_text_file(ctx.run_dir / "config.json", dump_config(ctx.config));
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << line << '\n';
}

fs::path ckpt_path(const RunContext& ctx, const std::string& name) {
  return ctx.run_dir / "checkpoints" / (name + ".ckpt");
}

fs::path require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw PreconditionError("missing " + p.string() + " (" + hint + ")");
  return p;
}

std::vector<TrainCase> to_train_cases(const std::vector<CorpusCase>& cases) {
  std::vector<TrainCase> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    out.push_back({c.id, c.record.image, c.record.roi_mask, c.grid, c.record.anomaly_mask});
  }
  return out;
}

json epoch_json(const std::string& command, const EpochRecord& r) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"command", command},       {"phase", phase_name(r.phase)}, {"epoch", r.epoch},
          {"loss", num(r.loss)},       {"lr", r.lr},                   {"refreshed", r.refreshed},
          {"mean_eu", num(r.mean_eu)}, {"mean_au", num(r.mean_au)},    {"au_inside", num(r.au_inside)},
          {"au_outside", num(r.au_outside)}};
}

void check_model(const RunContext& ctx, const ModelParams& params, const fs::path& path) {
  if (!(params.config == ctx.config.model)) {
    throw PreconditionError(path.string() + " was trained with a different model configuration");
  }
}

std::string segments_text(const std::vector<int>& segs) {
  std::string s;
  for (std::size_t i = 0; i < segs.size(); ++i) s += (i ? ";" : "") + std::to_string(segs[i]);
  return s;
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!l.empty() && l.back() == ',') f.emplace_back();
    return f;
  };
  if (!std::getline(in, line)) return rows;
  header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < f.size(); ++i) row[header[i]] = f[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

RunLock::RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
  fs::create_directories(run_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw PreconditionError("run directory is locked by another process: " + path_.string() +
                            " (remove it if no command is running)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

fs::path data_dir(const RunContext& ctx) {
  return ctx.config.io.data_dir.empty() ? ctx.run_dir / "data" : fs::path(ctx.config.io.data_dir);
}

std::vector<CorpusCase> load_split(const RunContext& ctx, const std::string& split) {
  const fs::path dir = data_dir(ctx);
  const CorpusIndex index = read_index(dir / "index.json");
  std::vector<CorpusCase> out;
  for (const auto& e : index.split(split)) {
    CaseRecord rec = load_case(dir / e.path);
    PatchGrid grid = build_patch_grid(rec.roi_mask, ctx.config.model.patch_size);
    out.push_back({e.id, std::move(rec), std::move(grid)});
  }
  return out;
}

void cmd_gen_data(const RunContext& ctx) {
  RunLock lock(ctx.run_dir);
  snapshot_config(ctx);
  const auto& corpus = ctx.config.corpus;
  const std::string key = stamp_key(ctx, {"phantom"}, {data_dir(ctx).string()});
  if (stamp_matches(ctx, "gen-data", key) && fs::exists(data_dir(ctx) / "index.json")) {
    say(ctx, "gen-data: corpus is up to date");
    return;
  }
  const fs::path dir = data_dir(ctx);
  CorpusIndex index;
  for (int i = 0; i < corpus.healthy_count; ++i) {
    const std::uint64_t seed = mix_seed(seed_for(ctx, kSaltHealthy), static_cast<std::uint64_t>(i));
    const CaseRecord rec = generate_phantom(seed, corpus.healthy);
    const std::string id = case_name("healthy", i);
    save_case(dir / "healthy" / id, rec);
    index.entries.push_back({id, "healthy", "healthy/" + id, seed, false, {}});
  }

  const int n = corpus.target_count;
  const int n_anomalous = static_cast<int>(std::lround(corpus.prevalence * n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng pick(seed_for(ctx, kSaltPrevalence));
  std::shuffle(order.begin(), order.end(), pick);
  std::vector<char> anomalous(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n_anomalous; ++i) anomalous[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = mix_seed(seed_for(ctx, kSaltTarget), static_cast<std::uint64_t>(i));
    CaseRecord rec = generate_phantom(seed, corpus.target);
    if (anomalous[static_cast<std::size_t>(i)]) {
      Rng rng(mix_seed(seed, kSaltAnomaly));
      const int count = uniform_int(rng, 1, corpus.max_anomalies);
      rec = embed_anomalies(rec, count, rng);
    }
    const std::string id = case_name("target", i);
    save_case(dir / "target" / id, rec);
    index.entries.push_back({id, "target", "target/" + id, seed, rec.is_anomalous, rec.ground_truth_segments()});
  }
  index.prevalence = n ? static_cast<double>(n_anomalous) / n : 0.0;
  write_index(dir / "index.json", index);
  write_stamp(ctx, "gen-data", key);
  say(ctx, "gen-data: wrote " + std::to_string(corpus.healthy_count) + " healthy and " + std::to_string(n) +
               " target cases (" + std::to_string(n_anomalous) + " anomalous) to " + dir.string());
}

void cmd_pretrain(const RunContext& ctx) {
  RunLock lock(ctx.run_dir);
  snapshot_config(ctx);
  const fs::path index = require(data_dir(ctx) / "index.json", "run gen-data first");
  const std::string key = stamp_key(ctx, {"phantom", "model", "schedule"}, {file_digest(index)}, true);
  if (stamp_matches(ctx, "pretrain", key) && fs::exists(ckpt_path(ctx, "pretrain"))) {
    say(ctx, "pretrain: checkpoint is up to date");
    return;
  }
  const auto healthy = to_train_cases(load_split(ctx, "healthy"));
  if (healthy.empty()) throw PreconditionError("pretrain: the corpus has no healthy cases");
  Rng init_rng(seed_for(ctx, kSaltInit));
  ModelParams init = init_model(ctx.config.model, init_rng);
  Rng rng(seed_for(ctx, kSaltPretrain));
  TrainObserver obs;
  const fs::path history = ctx.run_dir / "history.jsonl";
  obs.on_epoch = [&](const EpochRecord& r) {
    append_line(history, epoch_json("pretrain", r).dump());
    say(ctx, "pretrain: epoch " + std::to_string(r.epoch + 1) + "/" +
                 std::to_string(ctx.config.schedule.pretrain_epochs) + " loss " + fmt(r.loss));
  };
  const TrainResult res = pretrain(std::move(init), healthy, ctx.config.schedule, rng, obs);
  save_checkpoint(ckpt_path(ctx, "pretrain"),
                  {res.params, std::nullopt, "pretrain", ctx.config.schedule.pretrain_epochs, rng_state(rng), key});
  write_stamp(ctx, "pretrain", key);
  say(ctx, "pretrain: wrote " + ckpt_path(ctx, "pretrain").string());
}

void cmd_adapt(const RunContext& ctx) {
  RunLock lock(ctx.run_dir);
  snapshot_config(ctx);
  const auto& cfg = ctx.config;
  const Strategy strategy = strategy_from_int(cfg.strategy);
  const fs::path index = require(data_dir(ctx) / "index.json", "run gen-data first");
  std::vector<std::string> inputs{file_digest(index)};
  if (strategy != Strategy::kAdaptOnly) {
    inputs.push_back(file_digest(require(ckpt_path(ctx, "pretrain"), "run pretrain first")));
  }
  const std::string key = stamp_key(ctx, {"phantom", "model", "schedule", "uncertainty", "detection"}, inputs);
  if (stamp_matches(ctx, "adapt", key) && fs::exists(ckpt_path(ctx, "final"))) {
    say(ctx, "adapt: final checkpoint is up to date");
    return;
  }

  if (strategy == Strategy::kPretrainOnly) {
    const Checkpoint pre = load_checkpoint(ckpt_path(ctx, "pretrain"));
    check_model(ctx, pre.params, ckpt_path(ctx, "pretrain"));
    save_checkpoint(ckpt_path(ctx, "final"), {pre.params, std::nullopt, "final", 0, "", key});
    write_stamp(ctx, "adapt", key);
    say(ctx, "adapt: strategy 1 uses the pretrained weights unchanged");
    return;
  }

  const auto target = to_train_cases(load_split(ctx, "target"));
  if (target.empty()) throw PreconditionError("adapt: the corpus has no target cases");

  const fs::path history = ctx.run_dir / "history.jsonl";
  const fs::path plans = ctx.run_dir / "plans.jsonl";
  const int stage1 = cfg.schedule.stage1_epochs;
  auto global_epoch = [&](Phase p, int e) { return p == Phase::kStage2 ? stage1 + e : e; };
  TrainObserver obs;
  obs.on_epoch = [&](const EpochRecord& r) {
    append_line(history, epoch_json("adapt", r).dump());
    say(ctx, std::string("adapt: ") + phase_name(r.phase) + " epoch " + std::to_string(r.epoch + 1) + " loss " +
                 fmt(r.loss) + (r.refreshed ? " (maps refreshed, mean EU " + fmt(r.mean_eu) + ")" : ""));
  };
  obs.on_plan = [&](Phase p, int e, std::size_t ci, const MaskPlan& plan) {
    append_line(plans, json{{"phase", phase_name(p)},
                            {"epoch", e},
                            {"case", target[ci].id},
                            {"masked", plan.masked},
                            {"forced_visible", plan.forced_visible}}
                           .dump());
  };
  if (cfg.io.save_maps) {
    obs.on_refresh = [&](Phase p, int e, const std::vector<UncertaintyMaps>& maps) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d", global_epoch(p, e));
      const fs::path dir = ctx.run_dir / "maps" / name;
      json manifest = {{"phase", phase_name(p)},
                       {"epoch", global_epoch(p, e)},
                       {"K", cfg.schedule.mc_samples},
                       {"ratio", cfg.schedule.ratio},
                       {"seed", cfg.io.seed},
                       {"passes", json::object()}};
      for (std::size_t i = 0; i < maps.size(); ++i) {
        write_image(dir / target[i].id / "au.f32", maps[i].au);
        write_image(dir / target[i].id / "eu.f32", maps[i].eu);
        manifest["passes"][target[i].id] = maps[i].passes;
      }
      write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    };
  }
  obs.on_stage1_end = [&](const TrainState& st) {
    save_checkpoint(ckpt_path(ctx, "stage1"), {st.params, st.adam, "stage1", stage1, rng_state(st.rng), key});
  };

  TrainResult res;
  const fs::path snap = ckpt_path(ctx, "stage1");
  bool resumed = false;
  if (fs::exists(snap)) {
    Checkpoint c = load_checkpoint(snap);
    if (c.run_config == key && c.adam && !c.rng_state.empty()) {
      TrainState st{std::move(c.params), std::move(*c.adam), Rng()};
      restore_rng_state(st.rng, c.rng_state);
      say(ctx, "adapt: resuming stage 2 from " + snap.string());
      res = resume_stage2(st, target, cfg.schedule, obs);
      resumed = true;
    }
  }
  if (!resumed) {
    ModelParams init;
    if (strategy == Strategy::kAdaptOnly) {
      Rng init_rng(seed_for(ctx, kSaltInit));
      init = init_model(cfg.model, init_rng);
    } else {
      init = load_checkpoint(ckpt_path(ctx, "pretrain")).params;
      check_model(ctx, init, ckpt_path(ctx, "pretrain"));
    }
    Rng rng(seed_for(ctx, kSaltAdapt));
    res = adapt(std::move(init), target, cfg.schedule, rng, obs);
  }
  save_checkpoint(ckpt_path(ctx, "final"),
                  {res.params, std::nullopt, "final", stage1 + cfg.schedule.stage2_epochs, "", key});
  write_stamp(ctx, "adapt", key);
  say(ctx, "adapt: wrote " + ckpt_path(ctx, "final").string());
}

void cmd_detect(const RunContext& ctx) {
  RunLock lock(ctx.run_dir);
  snapshot_config(ctx);
  const fs::path final_ckpt = require(ckpt_path(ctx, "final"), "run adapt first");
  const fs::path index = require(data_dir(ctx) / "index.json", "run gen-data first");
  const std::string key =
      stamp_key(ctx, {"uncertainty", "detection"}, {file_digest(final_ckpt), file_digest(index)});
  const fs::path reports = ctx.run_dir / "reports";
  if (stamp_matches(ctx, "detect", key) && fs::exists(reports / "scores.csv")) {
    say(ctx, "detect: reports are up to date");
    return;
  }
  const Checkpoint ckpt = load_checkpoint(final_ckpt);
  check_model(ctx, ckpt.params, final_ckpt);
  const auto cases = load_split(ctx, "target");
  const Network<float> net(ckpt.params.config);
  const auto out = detect_corpus(net, ckpt.params, cases, ctx.config.detection, seed_for(ctx, kSaltDetect));

  for (const auto& rep : out) {
    const fs::path dir = reports / rep.case_id;
    write_image(dir / "ano_map.f32", rep.ano_map);
    json segs = json::object();
    for (int s = 1; s <= kSegmentCount; ++s) {
      const auto k = static_cast<std::size_t>(s - 1);
      segs[segment_name(s)] = rep.decisions.segment_present[k] ? json(rep.decisions.segment_scores[k]) : json(nullptr);
    }
    json ccs = json::array();
    for (const auto& cc : rep.retained) {
      ccs.push_back({{"score", cc.score},
                     {"pixels", cc.pixels.size()},
                     {"bbox", {cc.bbox.row0, cc.bbox.col0, cc.bbox.row1, cc.bbox.col1}}});
    }
    const json report = {{"case_id", rep.case_id},
                         {"patient_score", rep.decisions.patient_score},
                         {"segment_scores", segs},
                         {"argmax_segment", argmax_segment(rep.decisions)},
                         {"retained_ccs", ccs},
                         {"ano_curve", rep.curve},
                         {"is_anomalous", rep.is_anomalous},
                         {"ground_truth_segments", rep.ground_truth_segments},
                         {"K", ctx.config.detection.mc_samples},
                         {"ratio", ctx.config.detection.ratio}};
    write_text_file(dir / "report.json", report.dump(2) + "\n");
  }
  std::ostringstream table;
  write_score_table(table, score_rows(out));
  write_text_file(reports / "scores.csv", table.str());
  write_stamp(ctx, "detect", key);
  say(ctx, "detect: scored " + std::to_string(out.size()) + " cases into " + (reports / "scores.csv").string());
}

namespace {

std::string fold_csv(const CvResult& res) {
  std::ostringstream out;
  out << "repeat,fold,skipped,threshold,accuracy,f1,recall,specificity,note\n";
  for (const auto& f : res.folds) {
    out << f.repeat << ',' << f.fold << ',' << (f.skipped ? 1 : 0) << ',';
    if (f.skipped) {
      out << "NA,NA,NA,NA,NA," << f.note << '\n';
    } else {
      out << fmt(f.threshold) << ',' << fmt(f.metrics.accuracy) << ',' << fmt(f.metrics.f1) << ','
          << fmt(f.metrics.recall) << ',' << fmt(f.metrics.specificity) << ",\n";
    }
  }
  return out.str();
}

json summary_json(const CvResult& r) {
  auto m = [](const MetricSummary& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
  return {{"accuracy", m(r.accuracy)}, {"f1", m(r.f1)},        {"recall", m(r.recall)},
          {"specificity", m(r.specificity)}, {"evaluated_folds", r.evaluated}, {"skipped_folds", r.skipped}};
}

}  // namespace

void cmd_eval(const RunContext& ctx) {
  RunLock lock(ctx.run_dir);
  snapshot_config(ctx);
  const fs::path scores = require(ctx.run_dir / "reports" / "scores.csv", "run detect first");
  std::istringstream in(read_text_file(scores));
  const auto rows = read_score_table(in);
  const CvPlan plan{ctx.config.eval.folds, ctx.config.eval.repeats, seed_for(ctx, kSaltEval),
                    ctx.config.eval.target_sensitivity};
  const fs::path out = ctx.run_dir / "eval";
  fs::create_directories(out);

  const auto pu = patient_units(rows);
  const auto su = segment_units(rows);
  const CvResult patient = pu.empty() ? CvResult{} : cross_validate(pu, plan, CvLevel::kPatient);
  const CvResult segment = su.empty() ? CvResult{} : cross_validate(su, plan, CvLevel::kSegment);
  write_text_file(out / "patient_cv.csv", fold_csv(patient));
  write_text_file(out / "segment_cv.csv", fold_csv(segment));

  // Held-out decisions of the first repeat: every case is flagged by the fold that tested it.
  std::map<std::string, std::string> patient_flag, patient_thr;
  std::map<std::string, std::vector<int>> segment_flags;
  for (const auto& f : patient.folds) {
    if (f.repeat != 0) continue;
    for (std::size_t i : f.test_units) {
      patient_thr[pu[i].case_id] = f.skipped ? "NA" : fmt(f.threshold);
      patient_flag[pu[i].case_id] = f.skipped ? "NA" : (pu[i].score > f.threshold ? "1" : "0");
    }
  }
  for (const auto& f : segment.folds) {
    if (f.repeat != 0 || f.skipped) continue;
    for (std::size_t i : f.test_units) {
      if (su[i].score > f.threshold) segment_flags[su[i].case_id].push_back(su[i].segment);
    }
  }
  std::ostringstream dec;
  dec << "case_id,patient_threshold,patient_flag,flagged_segments,is_anomalous,gt_segments\n";
  for (const auto& r : rows) {
    auto segs = segment_flags[r.case_id];
    std::sort(segs.begin(), segs.end());
    dec << r.case_id << ',' << patient_thr[r.case_id] << ',' << patient_flag[r.case_id] << ','
        << segments_text(segs) << ',' << (r.is_anomalous ? 1 : 0) << ',' << segments_text(r.ground_truth_segments)
        << '\n';
  }
  write_text_file(out / "decisions.csv", dec.str());

  const auto n_anom = std::count_if(rows.begin(), rows.end(), [](const ScoreRow& r) { return r.is_anomalous; });
  const json summary = {{"cases", rows.size()},
                        {"anomalous_cases", n_anom},
                        {"folds", plan.folds},
                        {"repeats", plan.repeats},
                        {"target_sensitivity", plan.target_sensitivity},
                        {"patient", summary_json(patient)},
                        {"segment", summary_json(segment)},
                        {"localization_accuracy", localization_accuracy(rows)}};
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  say(ctx, "eval: patient F1 " + fmt(patient.f1.mean) + " +/- " + fmt(patient.f1.std) + ", segment F1 " +
               fmt(segment.f1.mean) + ", localization " + fmt(localization_accuracy(rows)));
}

void cmd_sweep(const RunContext& ctx) {
  RunLock lock(ctx.run_dir);
  snapshot_config(ctx);
  const fs::path final_ckpt = require(ckpt_path(ctx, "final"), "run adapt first");
  const fs::path index = require(data_dir(ctx) / "index.json", "run gen-data first");
  const std::string key =
      stamp_key(ctx, {"uncertainty", "detection", "eval"}, {file_digest(final_ckpt), file_digest(index)});
  const fs::path out = ctx.run_dir / "sweep";
  if (stamp_matches(ctx, "sweep", key) && fs::exists(out / "robustness.csv")) {
    say(ctx, "sweep: tables are up to date");
    return;
  }
  const Checkpoint ckpt = load_checkpoint(final_ckpt);
  check_model(ctx, ckpt.params, final_ckpt);
  const auto cases = load_split(ctx, "target");
  if (cases.empty()) throw PreconditionError("sweep: the corpus has no target cases");
  const Network<float> net(ckpt.params.config);
  const CvPlan plan{ctx.config.eval.folds, ctx.config.eval.repeats, seed_for(ctx, kSaltEval),
                    ctx.config.eval.target_sensitivity};
  const auto& ev = ctx.config.eval;
  const std::uint64_t seed = seed_for(ctx, kSaltDetect);

  auto table = [](const std::vector<SweepRow>& rows, bool with_time) {
    std::ostringstream t;
    t << "kind,level,patient_f1_mean,patient_f1_std,patient_accuracy,patient_recall,patient_specificity,"
         "segment_f1_mean,segment_f1_std,localization";
    if (with_time) t << ",seconds_per_image";
    t << '\n';
    for (const auto& r : rows) {
      t << r.kind << ',' << fmt(r.level) << ',' << fmt(r.patient.f1.mean) << ',' << fmt(r.patient.f1.std) << ','
        << fmt(r.patient.accuracy.mean) << ',' << fmt(r.patient.recall.mean) << ','
        << fmt(r.patient.specificity.mean) << ',' << fmt(r.segment.f1.mean) << ',' << fmt(r.segment.f1.std) << ','
        << fmt(r.localization);
      if (with_time) t << ',' << fmt(r.seconds_per_image);
      t << '\n';
    }
    return t.str();
  };
  say(ctx, "sweep: K values");
  const auto ks = k_sweep(net, ckpt.params, cases, ev.k_values, ctx.config.detection, plan, seed);
  write_text_file(out / "k.csv", table(ks, true));
  say(ctx, "sweep: noise and resolution");
  const auto rob = robustness_sweep(net, ckpt.params, cases, ev.noise_vars, ev.downsample_factors,
                                    ctx.config.detection, plan, seed);
  write_text_file(out / "robustness.csv", table(rob, false));
  write_stamp(ctx, "sweep", key);
  say(ctx, "sweep: wrote " + out.string());
}

void cmd_plot(const RunContext& ctx) {
  RunLock lock(ctx.run_dir);
  snapshot_config(ctx);
  const fs::path reports = ctx.run_dir / "reports";
  std::istringstream in(read_text_file(require(reports / "scores.csv", "run detect first")));
  const auto rows = read_score_table(in);
  const fs::path out = ctx.run_dir / "plots";
  fs::create_directories(out);
  auto sidecar = [&](const std::string& name, const json& meta) {
    write_text_file(out / (name + ".json"), meta.dump(2) + "\n");
  };

  std::map<std::string, std::string> paths;
  if (!rows.empty()) {
    for (const auto& e : read_index(data_dir(ctx) / "index.json").entries) paths[e.id] = e.path;
  }
  for (const auto& row : rows) {
    const fs::path dir = require(reports / row.case_id, "run detect first");
    const json report = json::parse(read_text_file(require(dir / "report.json", "run detect first")));
    const Image map = read_image(require(dir / "ano_map.f32", "run detect first"));
    if (!paths.count(row.case_id)) throw PreconditionError("case " + row.case_id + " is not in the corpus index");
    const CaseRecord rec = load_case(data_dir(ctx) / paths[row.case_id]);
    std::vector<ConnectedComponent> ccs;
    for (const auto& cc : report.at("retained_ccs")) {
      ConnectedComponent c;
      c.score = cc.at("score").get<double>();
      const auto b = cc.at("bbox").get<std::vector<int>>();
      c.bbox = {b.at(0), b.at(1), b.at(2), b.at(3)};
      ccs.push_back(std::move(c));
    }
    overlay_plot(rec.image, map, ccs).write_ppm(out / ("overlay_" + row.case_id + ".ppm"));
    sidecar("overlay_" + row.case_id, {{"case_id", row.case_id}, {"outlines", ccs.size()}});

    const auto curve = report.at("ano_curve").get<std::vector<double>>();
    const auto segs = row_segments(rec.segment_labels);
    std::vector<int> bounds;
    for (std::size_t j = 1; j < segs.size(); ++j) {
      if (segs[j] != segs[j - 1]) bounds.push_back(static_cast<int>(j));
    }
    curve_plot(curve, bounds).write_ppm(out / ("curve_" + row.case_id + ".ppm"));
    sidecar("curve_" + row.case_id,
            {{"case_id", row.case_id}, {"x_axis", "image row"}, {"x_length", curve.size()}, {"boundaries", bounds}});
  }

  const fs::path history = ctx.run_dir / "history.jsonl";
  if (fs::exists(history)) {
    std::vector<double> loss, eu, au, au_in, au_out;
    std::istringstream h(read_text_file(history));
    std::string line;
    auto val = [](const json& j, const char* k) {
      return j.contains(k) && j[k].is_number() ? j[k].get<double>() : std::nan("");
    };
    while (std::getline(h, line)) {
      if (line.empty()) continue;
      const json r = json::parse(line);
      loss.push_back(val(r, "loss"));
      if (r.value("refreshed", false)) {
        eu.push_back(val(r, "mean_eu"));
        au.push_back(val(r, "mean_au"));
        au_in.push_back(val(r, "au_inside"));
        au_out.push_back(val(r, "au_outside"));
      }
    }
    line_chart({loss}).write_ppm(out / "trend_loss.ppm");
    sidecar("trend_loss", {{"series", {"loss"}}, {"x_axis", "epoch (all phases)"}, {"points", loss.size()}});
    line_chart({eu}).write_ppm(out / "trend_eu.ppm");
    sidecar("trend_eu", {{"series", {"mean EU"}}, {"x_axis", "map refresh"}, {"points", eu.size()}});
    line_chart({au, au_in, au_out}).write_ppm(out / "trend_au.ppm");
    sidecar("trend_au", {{"series", {"mean AU", "AU inside anomalies", "AU outside anomalies"}},
                         {"x_axis", "map refresh"},
                         {"points", au.size()}});
  }

  auto column = [](const std::vector<std::map<std::string, std::string>>& t, const std::string& c) {
    std::vector<double> v;
    for (const auto& r : t) {
      const auto it = r.find(c);
      if (it != r.end() && it->second != "NA" && !it->second.empty()) v.push_back(std::stod(it->second));
    }
    return v;
  };
  const fs::path pcv = ctx.run_dir / "eval" / "patient_cv.csv";
  const fs::path scv = ctx.run_dir / "eval" / "segment_cv.csv";
  if (fs::exists(pcv) && fs::exists(scv)) {
    box_plot({column(read_csv(pcv), "f1"), column(read_csv(scv), "f1")}).write_ppm(out / "cv_f1_box.ppm");
    sidecar("cv_f1_box", {{"groups", {"patient F1", "segment F1"}}, {"unit", "per fold and repeat"}});
  }
  const fs::path kcsv = ctx.run_dir / "sweep" / "k.csv";
  if (fs::exists(kcsv)) {
    const auto t = read_csv(kcsv);
    line_chart({column(t, "patient_f1_mean"), column(t, "segment_f1_mean")}).write_ppm(out / "k_sweep.ppm");
    sidecar("k_sweep", {{"series", {"patient F1", "segment F1"}}, {"x", column(t, "level")}});
  }
  const fs::path rcsv = ctx.run_dir / "sweep" / "robustness.csv";
  if (fs::exists(rcsv)) {
    std::vector<std::map<std::string, std::string>> noise, down;
    for (auto& r : read_csv(rcsv)) (r["kind"] == "noise" ? noise : down).push_back(r);
    line_chart({column(noise, "patient_f1_mean"), column(noise, "segment_f1_mean")})
        .write_ppm(out / "robustness_noise.ppm");
    sidecar("robustness_noise", {{"series", {"patient F1", "segment F1"}}, {"x", column(noise, "level")}});
    line_chart({column(down, "patient_f1_mean"), column(down, "segment_f1_mean")})
        .write_ppm(out / "robustness_downsample.ppm");
    sidecar("robustness_downsample", {{"series", {"patient F1", "segment F1"}}, {"x", column(down, "level")}});
  }
  say(ctx, "plot: wrote " + out.string());
}

}  // namespace u2ad
