#pragma once

#include <vector>

#include "u2ad/model.hpp"
#include "u2ad/patching.hpp"
#include "u2ad/random.hpp"
#include "u2ad/raster.hpp"

namespace u2ad {

/// Reconstructions collected per grid patch by repeated random masking.
struct McEnsemble {
  int patch_dim = 0;
  int target = 0;  ///< K
  int passes = 0;
  /// samples[i][s] is the s-th P*P reconstruction of patch i.
  std::vector<std::vector<std::vector<double>>> samples;

  int counter(int i) const { return static_cast<int>(samples.at(static_cast<std::size_t>(i)).size()); }
  int min_counter() const;
};

/// Masked-reconstruction passes at ratio r until every patch holds at least K
/// reconstructions. Throws RunawayError after ceil(100 K / r) passes.
McEnsemble mc_sample(const PatchPredictor& predict, const PatchGrid& grid, double ratio, int K, Rng& rng);

struct UncertaintyMaps {
  Image au;    ///< |x - mu| on ROI pixels
  Image eu;    ///< unbiased sample variance on ROI pixels
  Image mean;  ///< mu on ROI pixels, x elsewhere
  int passes = 0;  ///< forward passes of the ensemble, when known
};

/// Subsamples exactly K reconstructions per patch and summarizes them per pixel.
/// Throws IncompleteEnsembleError if a patch holds fewer than K.
UncertaintyMaps estimate_maps(const McEnsemble& ens, const Image& x, const Mask& roi, const PatchGrid& grid,
                              int K, Rng& rng);

/// The `mean` field of estimate_maps; consumes the RNG identically.
Image mean_reconstruction(const McEnsemble& ens, const Image& x, const Mask& roi, const PatchGrid& grid, int K,
                          Rng& rng);

/// mc_sample followed by estimate_maps for one image.
UncertaintyMaps uncertainty_maps(const PatchPredictor& predict, const Image& x, const Mask& roi,
                                 const PatchGrid& grid, double ratio, int K, Rng& rng);

/// Mean of `map` over ROI pixels.
double roi_mean(const Image& map, const Mask& roi);

}  // namespace u2ad
