#pragma once

#include <span>
#include <vector>

#include "u2ad/raster.hpp"

namespace u2ad {

struct BoundingBox {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;  ///< inclusive
  int col1 = 0;  ///< inclusive
};

/// A maximal connected set of support pixels and its summed map value.
struct ConnectedComponent {
  std::vector<int> pixels;  ///< linear indices, ascending
  double score = 0.0;
  BoundingBox bbox;
};

/// Labels the support {map > 0}. Connectivity is 4 or 8. Components are
/// returned in raster order of their first pixel.
std::vector<ConnectedComponent> cc_label(const Image& map, int connectivity = 8);

/// Binary overload; every pixel scores 1.
std::vector<ConnectedComponent> cc_label(const Mask& mask, int connectivity = 8);

/// Nearest-rank quantile of `map` over ROI pixels: the sorted value at index
/// floor(q * n), clamped to n - 1.
double roi_quantile(const Image& map, const Mask& roi, double q);

/// Zeroes ROI pixels strictly below the q-quantile. Pixels outside the ROI are zeroed too.
Image percentile_filter(const Image& map, const Mask& roi, double q = 0.20);

/// Top-k by descending score; ties go to the smaller (row0, col0) bounding-box origin.
std::vector<ConnectedComponent> retain_top_ccs(std::vector<ConnectedComponent> ccs, int k = 3);

/// `map` restricted to the pixels of `keep`.
Image keep_components(const Image& map, std::span<const ConnectedComponent> keep);

}  // namespace u2ad
