#include "u2ad/config.hpp"

#include <algorithm>
#include <cctype>
#include <json.hpp>

#include "u2ad/dataset_io.hpp"
#include "u2ad/errors.hpp"

extern char** environ;

namespace u2ad {

using nlohmann::json;

namespace {

json phantom_json(const PhantomConfig& p) {
  return {{"height", p.height},
          {"width", p.width},
          {"cord_top", p.cord_top},
          {"cord_bottom", p.cord_bottom},
          {"sc_width_min", p.sc_width_min},
          {"sc_width_max", p.sc_width_max},
          {"width_variation", p.width_variation},
          {"csf_margin_min", p.csf_margin_min},
          {"csf_margin_max", p.csf_margin_max},
          {"curve_amplitude_max", p.curve_amplitude_max},
          {"background_intensity", p.background_intensity},
          {"sc_intensity", p.sc_intensity},
          {"csf_intensity", p.csf_intensity},
          {"intensity_jitter", p.intensity_jitter},
          {"modulation_amplitude", p.modulation_amplitude},
          {"edge_blur_sigma", p.edge_blur_sigma},
          {"noise_sigma", p.noise_sigma}};
}

PhantomConfig phantom_from(const json& j) {
  PhantomConfig p;
  j.at("height").get_to(p.height);
  j.at("width").get_to(p.width);
  j.at("cord_top").get_to(p.cord_top);
  j.at("cord_bottom").get_to(p.cord_bottom);
  j.at("sc_width_min").get_to(p.sc_width_min);
  j.at("sc_width_max").get_to(p.sc_width_max);
  j.at("width_variation").get_to(p.width_variation);
  j.at("csf_margin_min").get_to(p.csf_margin_min);
  j.at("csf_margin_max").get_to(p.csf_margin_max);
  j.at("curve_amplitude_max").get_to(p.curve_amplitude_max);
  j.at("background_intensity").get_to(p.background_intensity);
  j.at("sc_intensity").get_to(p.sc_intensity);
  j.at("csf_intensity").get_to(p.csf_intensity);
  j.at("intensity_jitter").get_to(p.intensity_jitter);
  j.at("modulation_amplitude").get_to(p.modulation_amplitude);
  j.at("edge_blur_sigma").get_to(p.edge_blur_sigma);
  j.at("noise_sigma").get_to(p.noise_sigma);
  return p;
}

json to_json(const RunConfig& c) {
  const auto& s = c.schedule;
  const auto& d = c.detection;
  return {
      {"phantom",
       {{"healthy", phantom_json(c.corpus.healthy)},
        {"target", phantom_json(c.corpus.target)},
        {"healthy_count", c.corpus.healthy_count},
        {"target_count", c.corpus.target_count},
        {"prevalence", c.corpus.prevalence},
        {"max_anomalies", c.corpus.max_anomalies}}},
      {"model",
       {{"patch_size", c.model.patch_size},
        {"embed_dim", c.model.embed_dim},
        {"encoder_depth", c.model.encoder_depth},
        {"decoder_depth", c.model.decoder_depth},
        {"num_heads", c.model.num_heads},
        {"mlp_ratio", c.model.mlp_ratio},
        {"edge_weight", c.model.edge_weight}}},
      {"schedule",
       {{"strategy", c.strategy},
        {"pretrain_epochs", s.pretrain_epochs},
        {"stage1_epochs", s.stage1_epochs},
        {"stage2_epochs", s.stage2_epochs},
        {"batch_size", s.batch_size},
        {"lr", s.adam.lr},
        {"beta1", s.adam.beta1},
        {"beta2", s.adam.beta2},
        {"eps", s.adam.eps},
        {"decay_every", s.adam.decay_every},
        {"decay_factor", s.adam.decay_factor},
        {"adapt_lr", s.adapt_adam.lr},
        {"adapt_decay_every", s.adapt_adam.decay_every},
        {"augment", s.augment},
        {"noise_var", s.augmentation.noise_var},
        {"brightness_lo", s.augmentation.brightness_lo},
        {"brightness_hi", s.augmentation.brightness_hi},
        {"contrast_lo", s.augmentation.contrast_lo},
        {"contrast_hi", s.augmentation.contrast_hi}}},
      {"uncertainty",
       {{"K", s.mc_samples}, {"ratio", s.ratio}, {"tau", s.tau}, {"refresh_interval", s.refresh_interval}}},
      {"detection",
       {{"quantile", d.quantile},
        {"top_k", d.top_k},
        {"connectivity", d.connectivity},
        {"curve_source", d.curve_from_postprocessed ? "postprocessed" : "raw"},
        {"au_exclusion_quantile", s.au_exclusion.quantile}}},
      {"eval",
       {{"folds", c.eval.folds},
        {"repeats", c.eval.repeats},
        {"target_sensitivity", c.eval.target_sensitivity},
        {"k_values", c.eval.k_values},
        {"noise_vars", c.eval.noise_vars},
        {"downsample_factors", c.eval.downsample_factors}}},
      {"io", {{"seed", c.io.seed}, {"save_maps", c.io.save_maps}, {"data_dir", c.io.data_dir}}},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  const auto& ph = j.at("phantom");
  c.corpus.healthy = phantom_from(ph.at("healthy"));
  c.corpus.target = phantom_from(ph.at("target"));
  ph.at("healthy_count").get_to(c.corpus.healthy_count);
  ph.at("target_count").get_to(c.corpus.target_count);
  ph.at("prevalence").get_to(c.corpus.prevalence);
  ph.at("max_anomalies").get_to(c.corpus.max_anomalies);

  const auto& m = j.at("model");
  m.at("patch_size").get_to(c.model.patch_size);
  m.at("embed_dim").get_to(c.model.embed_dim);
  m.at("encoder_depth").get_to(c.model.encoder_depth);
  m.at("decoder_depth").get_to(c.model.decoder_depth);
  m.at("num_heads").get_to(c.model.num_heads);
  m.at("mlp_ratio").get_to(c.model.mlp_ratio);
  m.at("edge_weight").get_to(c.model.edge_weight);
  c.model.image_height = c.corpus.target.height;
  c.model.image_width = c.corpus.target.width;

  auto& s = c.schedule;
  const auto& sj = j.at("schedule");
  sj.at("strategy").get_to(c.strategy);
  sj.at("pretrain_epochs").get_to(s.pretrain_epochs);
  sj.at("stage1_epochs").get_to(s.stage1_epochs);
  sj.at("stage2_epochs").get_to(s.stage2_epochs);
  sj.at("batch_size").get_to(s.batch_size);
  sj.at("lr").get_to(s.adam.lr);
  sj.at("beta1").get_to(s.adam.beta1);
  sj.at("beta2").get_to(s.adam.beta2);
  sj.at("eps").get_to(s.adam.eps);
  sj.at("decay_every").get_to(s.adam.decay_every);
  sj.at("decay_factor").get_to(s.adam.decay_factor);
  s.adapt_adam = s.adam;
  sj.at("adapt_lr").get_to(s.adapt_adam.lr);
  sj.at("adapt_decay_every").get_to(s.adapt_adam.decay_every);
  sj.at("augment").get_to(s.augment);
  sj.at("noise_var").get_to(s.augmentation.noise_var);
  sj.at("brightness_lo").get_to(s.augmentation.brightness_lo);
  sj.at("brightness_hi").get_to(s.augmentation.brightness_hi);
  sj.at("contrast_lo").get_to(s.augmentation.contrast_lo);
  sj.at("contrast_hi").get_to(s.augmentation.contrast_hi);

  const auto& u = j.at("uncertainty");
  u.at("K").get_to(s.mc_samples);
  u.at("ratio").get_to(s.ratio);
  u.at("tau").get_to(s.tau);
  u.at("refresh_interval").get_to(s.refresh_interval);

  auto& d = c.detection;
  const auto& dj = j.at("detection");
  dj.at("quantile").get_to(d.quantile);
  dj.at("top_k").get_to(d.top_k);
  dj.at("connectivity").get_to(d.connectivity);
  const auto source = dj.at("curve_source").get<std::string>();
  if (source != "postprocessed" && source != "raw") {
    throw ConfigError("detection.curve_source must be \"postprocessed\" or \"raw\"");
  }
  d.curve_from_postprocessed = source == "postprocessed";
  dj.at("au_exclusion_quantile").get_to(s.au_exclusion.quantile);
  d.mc_samples = s.mc_samples;
  d.ratio = s.ratio;
  s.au_exclusion.top_k = d.top_k;
  s.au_exclusion.connectivity = d.connectivity;

  const auto& e = j.at("eval");
  e.at("folds").get_to(c.eval.folds);
  e.at("repeats").get_to(c.eval.repeats);
  e.at("target_sensitivity").get_to(c.eval.target_sensitivity);
  e.at("k_values").get_to(c.eval.k_values);
  e.at("noise_vars").get_to(c.eval.noise_vars);
  e.at("downsample_factors").get_to(c.eval.downsample_factors);

  const auto& io = j.at("io");
  io.at("seed").get_to(c.io.seed);
  io.at("save_maps").get_to(c.io.save_maps);
  io.at("data_dir").get_to(c.io.data_dir);
  return c;
}

bool compatible(const json& def, const json& val) {
  if (def.is_number()) {
    if (def.is_number_integer()) return val.is_number_integer();
    return val.is_number();
  }
  return def.type() == val.type();
}

void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config " + (where.empty() ? "root" : where) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), key);
    } else {
      if (!compatible(slot, it.value())) throw ConfigError("wrong type for config key: " + key);
      slot = it.value();
    }
  }
}

RunConfig checked(const json& j) {
  try {
    RunConfig c = from_json(j);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

}  // namespace

void RunConfig::validate() const {
  corpus.healthy.validate();
  corpus.target.validate();
  if (corpus.healthy.height != corpus.target.height || corpus.healthy.width != corpus.target.width) {
    throw ConfigError("phantom: healthy and target images must share a size");
  }
  if (corpus.healthy_count < 0 || corpus.target_count < 0) throw ConfigError("phantom: negative case count");
  if (!(corpus.prevalence >= 0.0 && corpus.prevalence <= 1.0)) throw ConfigError("phantom: prevalence in [0, 1]");
  if (corpus.max_anomalies < 1 || corpus.max_anomalies > 3) throw ConfigError("phantom: max_anomalies in [1, 3]");
  model.validate();
  schedule.validate();
  if (strategy < 1 || strategy > 3) throw ConfigError("schedule.strategy must be 1, 2 or 3");
  if (!(detection.quantile >= 0.0 && detection.quantile < 1.0)) throw ConfigError("detection.quantile in [0, 1)");
  if (!(schedule.au_exclusion.quantile >= 0.0 && schedule.au_exclusion.quantile < 1.0)) {
    throw ConfigError("detection.au_exclusion_quantile in [0, 1)");
  }
  if (detection.top_k < 1) throw ConfigError("detection.top_k must be >= 1");
  if (detection.connectivity != 4 && detection.connectivity != 8) throw ConfigError("detection.connectivity: 4 or 8");
  if (eval.folds < 2) throw ConfigError("eval.folds must be >= 2");
  if (eval.repeats < 1) throw ConfigError("eval.repeats must be >= 1");
  if (!(eval.target_sensitivity > 0.0 && eval.target_sensitivity <= 1.0)) {
    throw ConfigError("eval.target_sensitivity in (0, 1]");
  }
  for (int k : eval.k_values) {
    if (k < 2) throw ConfigError("eval.k_values entries must be >= 2");
  }
  for (double v : eval.noise_vars) {
    if (v < 0.0) throw ConfigError("eval.noise_vars entries must be >= 0");
  }
  for (int f : eval.downsample_factors) {
    if (f < 1 || corpus.target.height % f != 0 || corpus.target.width % f != 0) {
      throw ConfigError("eval.downsample_factors entries must divide the image size");
    }
  }
}

RunConfig default_config() {
  RunConfig c;
  c.corpus.target.background_intensity = 0.15;
  c.corpus.target.sc_intensity = 0.45;
  c.corpus.target.csf_intensity = 0.80;
  c.corpus.target.modulation_amplitude = 0.20;
  c.corpus.target.noise_sigma = 0.03;
  c.corpus.healthy.sc_width_min = 18.0;
  c.corpus.healthy.sc_width_max = 26.0;
  c.corpus.target.sc_width_min = 20.0;
  c.corpus.target.sc_width_max = 28.0;
  c.schedule.pretrain_epochs = 80;
  c.schedule.stage1_epochs = 40;
  c.schedule.stage2_epochs = 10;
  c.schedule.adam.lr = 1e-3;
  c.schedule.adam.decay_every = 60;
  c.schedule.adapt_adam = c.schedule.adam;
  c.schedule.adapt_adam.lr = 5e-4;
  c.schedule.adapt_adam.decay_every = 37;
  c.schedule.augment = false;
  c.model.image_height = c.corpus.target.height;
  c.model.image_width = c.corpus.target.width;
  return c;
}

RunConfig parse_config(const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  json base = to_json(default_config());
  overlay(base, patch, "");
  return checked(base);
}

std::string dump_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig apply_env_overrides(const RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& env) {
  json base = to_json(cfg);
  for (const auto& [name, value] : env) {
    if (name.rfind("U2AD_", 0) != 0) continue;
    std::string rest = name.substr(5);
    std::vector<std::string> path;
    for (std::size_t pos = 0;;) {
      const std::size_t next = rest.find("__", pos);
      path.push_back(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    json* node = &base;
    std::string dotted;
    for (std::size_t i = 0; i < path.size(); ++i) {
      dotted += (i ? "." : "") + lower(path[i]);
      json* found = nullptr;
      if (node->is_object()) {
        for (auto it = node->begin(); it != node->end(); ++it) {
          if (lower(it.key()) == lower(path[i])) found = &it.value();
        }
      }
      if (!found) throw ConfigError("unknown config key in " + name + ": " + dotted);
      node = found;
    }
    if (node->is_object()) throw ConfigError(name + " names a section, not a key");
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;
    }
    if (!compatible(*node, parsed)) throw ConfigError("wrong type for " + name);
    *node = parsed;
  }
  return checked(base);
}

std::vector<std::pair<std::string, std::string>> process_env_overrides() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind("U2AD_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, bool use_env) {
  RunConfig cfg = file ? parse_config(read_text_file(*file)) : default_config();
  if (use_env) cfg = apply_env_overrides(cfg, process_env_overrides());
  return cfg;
}

std::uint64_t config_digest(const RunConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  return fnv1a(text.data(), text.size());
}

}  // namespace u2ad
