#include "u2ad/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "u2ad/errors.hpp"

namespace u2ad {

namespace {

constexpr char kMagic[] = "U2ADCKPT\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

nlohmann::json model_to_json(const ModelConfig& c) {
  return {{"image_height", c.image_height}, {"image_width", c.image_width}, {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},       {"encoder_depth", c.encoder_depth},
          {"decoder_depth", c.decoder_depth}, {"num_heads", c.num_heads},  {"mlp_ratio", c.mlp_ratio},
          {"edge_weight", c.edge_weight}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.image_height = j.at("image_height").get<int>();
  c.image_width = j.at("image_width").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.encoder_depth = j.at("encoder_depth").get<int>();
  c.decoder_depth = j.at("decoder_depth").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.edge_weight = j.at("edge_weight").get<double>();
  return c;
}

template <class Vec>
void write_floats(std::ofstream& out, const Vec& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

template <class Vec>
void read_floats(std::ifstream& in, Vec& v, std::size_t n, const std::filesystem::path& path) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw IoError("truncated checkpoint: " + path.string());
}

std::string adam_digest(const AdamState& a) {
  std::uint64_t h = fnv1a(a.m.data(), a.m.size() * sizeof(float));
  h = fnv1a(a.v.data(), a.v.size() * sizeof(float), h);
  return hex64(h);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (ckpt.params.values.size() != parameter_count(ckpt.params.config)) {
    throw ArgumentError("save_checkpoint: parameter vector does not match its config");
  }
  nlohmann::json header = {
      {"model", model_to_json(ckpt.params.config)},
      {"parameters", ckpt.params.values.size()},
      {"digest", hex64(params_digest(ckpt.params))},
      {"phase", ckpt.phase},
      {"epoch", ckpt.epoch},
      {"rng_state", ckpt.rng_state},
      {"rng_digest", hex64(fnv1a(ckpt.rng_state.data(), ckpt.rng_state.size()))},
      {"run_config", ckpt.run_config},
      {"adam", ckpt.adam.has_value()},
  };
  if (ckpt.adam) {
    header["adam_step"] = ckpt.adam->step;
    header["adam_digest"] = adam_digest(*ckpt.adam);
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_floats(out, ckpt.params.values);
    if (ckpt.adam) {
      write_floats(out, ckpt.adam->m);
      write_floats(out, ckpt.adam->v);
    }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  in.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) throw IoError("not a checkpoint: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 26)) throw IoError("corrupt checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint: " + path.string());

  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ckpt.params.config = model_from_json(header.at("model"));
    ckpt.phase = header.at("phase").get<std::string>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.run_config = header.at("run_config").get<std::string>();
    header.at("parameters").get<std::size_t>();
    header.at("digest").get<std::string>();
    if (header.at("adam").get<bool>()) {
      header.at("adam_step").get<std::int64_t>();
      header.at("adam_digest").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header: " + path.string() + ": " + e.what());
  }
  const auto n = header.at("parameters").get<std::size_t>();
  if (n != parameter_count(ckpt.params.config)) throw IoError("parameter count mismatch: " + path.string());
  read_floats(in, ckpt.params.values, n, path);
  if (header.at("adam").get<bool>()) {
    AdamState adam;
    read_floats(in, adam.m, n, path);
    read_floats(in, adam.v, n, path);
    adam.step = header.at("adam_step").get<std::int64_t>();
    if (adam_digest(adam) != header.at("adam_digest").get<std::string>()) {
      throw IoError("checkpoint optimizer digest mismatch: " + path.string());
    }
    ckpt.adam = std::move(adam);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in checkpoint: " + path.string());
  if (hex64(params_digest(ckpt.params)) != header.at("digest").get<std::string>()) {
    throw IoError("checkpoint digest mismatch: " + path.string());
  }
  return ckpt;
}

}  // namespace u2ad
