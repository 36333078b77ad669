#include "u2ad/components.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "u2ad/errors.hpp"

namespace u2ad {
namespace {

template <class Pred, class Weight>
std::vector<ConnectedComponent> label_support(int h, int w, int connectivity, Pred in_support,
                                              Weight weight) {
  if (connectivity != 4 && connectivity != 8) {
    throw ArgumentError("connectivity must be 4 or 8");
  }
  static constexpr int kDr[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
  static constexpr int kDc[8] = {0, 0, -1, 1, -1, 1, -1, 1};
  const int n_neighbors = connectivity;

  std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
  std::vector<int> stack;
  std::vector<ConnectedComponent> out;
  for (int start = 0; start < h * w; ++start) {
    if (seen[start] || !in_support(start)) continue;
    ConnectedComponent cc;
    cc.bbox = {start / w, start % w, start / w, start % w};
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      cc.pixels.push_back(p);
      const int r = p / w;
      const int c = p % w;
      cc.bbox.row0 = std::min(cc.bbox.row0, r);
      cc.bbox.row1 = std::max(cc.bbox.row1, r);
      cc.bbox.col0 = std::min(cc.bbox.col0, c);
      cc.bbox.col1 = std::max(cc.bbox.col1, c);
      for (int k = 0; k < n_neighbors; ++k) {
        const int rr = r + kDr[k];
        const int cc2 = c + kDc[k];
        if (rr < 0 || rr >= h || cc2 < 0 || cc2 >= w) continue;
        const int q = rr * w + cc2;
        if (!seen[q] && in_support(q)) {
          seen[q] = 1;
          stack.push_back(q);
        }
      }
    }
    std::sort(cc.pixels.begin(), cc.pixels.end());
    // Summed in ascending pixel order so scores do not depend on traversal order.
    for (int p : cc.pixels) cc.score += weight(p);
    out.push_back(std::move(cc));
  }
  return out;
}

}  // namespace

std::vector<ConnectedComponent> cc_label(const Image& map, int connectivity) {
  return label_support(
      map.height(), map.width(), connectivity, [&](int p) { return map[p] > 0.0; },
      [&](int p) { return map[p]; });
}

std::vector<ConnectedComponent> cc_label(const Mask& mask, int connectivity) {
  return label_support(
      mask.height(), mask.width(), connectivity, [&](int p) { return mask[p] != 0; },
      [](int) { return 1.0; });
}

double roi_quantile(const Image& map, const Mask& roi, double q) {
  if (!map.same_shape(roi)) throw ArgumentError("roi_quantile: shape mismatch");
  if (q < 0.0 || q > 1.0) throw ArgumentError("roi_quantile: q must lie in [0, 1]");
  std::vector<double> vals;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (roi[i]) vals.push_back(map[i]);
  }
  if (vals.empty()) throw DegenerateInputError("roi_quantile: empty ROI");
  const auto idx = std::min(vals.size() - 1, static_cast<std::size_t>(std::floor(q * vals.size())));
  std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(idx), vals.end());
  return vals[idx];
}

Image percentile_filter(const Image& map, const Mask& roi, double q) {
  const double cut = roi_quantile(map, roi, q);
  Image out(map.height(), map.width(), 0.0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (roi[i] && !(map[i] < cut)) out[i] = map[i];
  }
  return out;
}

std::vector<ConnectedComponent> retain_top_ccs(std::vector<ConnectedComponent> ccs, int k) {
  if (k < 0) throw ArgumentError("retain_top_ccs: k must be non-negative");
  std::stable_sort(ccs.begin(), ccs.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.bbox.row0 != b.bbox.row0) return a.bbox.row0 < b.bbox.row0;
    return a.bbox.col0 < b.bbox.col0;
  });
  if (static_cast<int>(ccs.size()) > k) ccs.resize(static_cast<std::size_t>(k));
  return ccs;
}

Image keep_components(const Image& map, std::span<const ConnectedComponent> keep) {
  Image out(map.height(), map.width(), 0.0);
  for (const auto& cc : keep) {
    for (int p : cc.pixels) out[static_cast<std::size_t>(p)] = map[static_cast<std::size_t>(p)];
  }
  return out;
}

}  // namespace u2ad
