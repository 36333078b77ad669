#pragma once

#include <vector>

#include "u2ad/random.hpp"
#include "u2ad/raster.hpp"

namespace u2ad {

struct PatchOrigin {
  int row = 0;
  int col = 0;
  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

/// Lattice patches (stride P) that contain at least one ROI pixel, in row-major order.
struct PatchGrid {
  int patch_size = 8;
  int image_height = 0;
  int image_width = 0;
  std::vector<PatchOrigin> origins;

  int count() const { return static_cast<int>(origins.size()); }
  int lattice_cols() const { return image_width / patch_size; }
  int lattice_rows() const { return image_height / patch_size; }
  /// Row-major index of patch i on the full lattice; keys positional encodings.
  int lattice_index(int i) const;
};

/// Which grid patches are hidden from the encoder on one pass.
struct MaskPlan {
  std::vector<int> masked;          ///< ascending patch indices
  std::vector<int> visible;         ///< ascending, complement of masked
  std::vector<int> forced_visible;  ///< ascending, never masked
  double ratio = 0.75;
};

PatchGrid build_patch_grid(const Mask& roi_mask, int patch_size = 8);

/// floor(r * N), robust to representation error in r.
int masked_count(double ratio, int n);

MaskPlan random_mask_plan(const PatchGrid& grid, double ratio, Rng& rng);

/// Sum of map values over the ROI pixels of patch i.
double patch_map_sum(const Image& map, const Mask& roi_mask, const PatchGrid& grid, int i);

/// Per-patch EU sums for the whole grid.
std::vector<double> patch_eu_sums(const Image& eu_map, const Mask& roi_mask, const PatchGrid& grid);

/// Softmax of eu_sums / tau, max-shifted.
std::vector<double> eu_weights(const std::vector<double>& eu_sums, double tau);

/// Masks the top floor(r N) patches by w_i * u_i, u_i ~ U(0, 1); ties go to the lower index.
MaskPlan eu_guided_plan(const PatchGrid& grid, const Image& eu_map, const Mask& roi_mask, double tau,
                        double ratio, Rng& rng);

struct AuExclusionOptions {
  int top_k = 3;
  double quantile = 0.95;  ///< AU pixels strictly below this ROI quantile are dropped before labeling
  int connectivity = 8;
};

/// Random masking with every patch touching one of the top-k AU components forced visible.
MaskPlan au_exclusion_plan(const PatchGrid& grid, const Image& au_map, const Mask& roi_mask,
                           double ratio, Rng& rng, const AuExclusionOptions& opts = {});

/// Patch indices whose pixel footprint intersects any nonzero pixel of `pixels`.
std::vector<int> patches_touching(const PatchGrid& grid, const Mask& pixels);

/// Ranks `scores` descending (ties to the lower index) and masks the first `count` entries.
MaskPlan plan_from_scores(const std::vector<double>& scores, int count, std::vector<int> forced_visible,
                          double ratio);

}  // namespace u2ad
