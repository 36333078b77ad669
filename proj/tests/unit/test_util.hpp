#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "u2ad/model.hpp"
#include "u2ad/patching.hpp"
#include "u2ad/phantom.hpp"
#include "u2ad/random.hpp"
#include "u2ad/raster.hpp"

namespace u2ad::test {

/// Small transformer for fast tests; 64x64 images.
inline ModelConfig tiny_model(int decoder_depth = 1) {
  ModelConfig c;
  c.image_height = 64;
  c.image_width = 64;
  c.patch_size = 8;
  c.embed_dim = 8;
  c.encoder_depth = 1;
  c.decoder_depth = decoder_depth;
  c.num_heads = 2;
  c.mlp_ratio = 2.0;
  return c;
}

/// 64x64 phantom geometry matching tiny_model.
inline PhantomConfig tiny_phantom() {
  PhantomConfig c;
  c.height = 64;
  c.width = 64;
  c.cord_top = 4;
  c.cord_bottom = 60;
  c.sc_width_min = 10.0;
  c.sc_width_max = 14.0;
  c.csf_margin_min = 2.0;
  c.csf_margin_max = 4.0;
  c.curve_amplitude_max = 4.0;
  return c;
}

inline Image random_image(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image out(h, w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = uniform(rng, lo, hi);
  return out;
}

inline Mask full_mask(int h, int w) { return Mask(h, w, 1); }

/// Predictor that returns the same patch pixels of `img` for every masked patch.
inline PatchPredictor copy_predictor(const Image& img, const PatchGrid& grid, double offset = 0.0) {
  return [img, grid, offset](const MaskPlan& plan) {
    const int pd = grid.patch_size * grid.patch_size;
    PatchPredictions out;
    for (int i : plan.masked) {
      std::vector<double> v(static_cast<std::size_t>(pd));
      copy_patch(img, grid, i, v.data());
      for (auto& x : v) x += offset;
      out.push_back(std::move(v));
    }
    return out;
  };
}

/// Fresh temporary directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("u2ad_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace u2ad::test
