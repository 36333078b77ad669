#include "u2ad/patching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "u2ad/components.hpp"
#include "u2ad/errors.hpp"

namespace u2ad {

int PatchGrid::lattice_index(int i) const {
  const auto& o = origins.at(static_cast<std::size_t>(i));
  return (o.row / patch_size) * lattice_cols() + o.col / patch_size;
}

PatchGrid build_patch_grid(const Mask& roi_mask, int patch_size) {
  if (patch_size <= 0 || roi_mask.height() % patch_size != 0 || roi_mask.width() % patch_size != 0) {
    throw ArgumentError("build_patch_grid: patch size must divide the image size");
  }
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.image_height = roi_mask.height();
  grid.image_width = roi_mask.width();
  for (int r0 = 0; r0 < roi_mask.height(); r0 += patch_size) {
    for (int c0 = 0; c0 < roi_mask.width(); c0 += patch_size) {
      bool hit = false;
      for (int r = r0; r < r0 + patch_size && !hit; ++r) {
        for (int c = c0; c < c0 + patch_size; ++c) {
          if (roi_mask(r, c)) {
            hit = true;
            break;
          }
        }
      }
      if (hit) grid.origins.push_back({r0, c0});
    }
  }
  if (grid.origins.empty()) throw DegenerateInputError("build_patch_grid: empty ROI");
  return grid;
}

int masked_count(double ratio, int n) {
  return std::clamp(static_cast<int>(std::floor(ratio * n + 1e-9)), 0, n);
}

MaskPlan plan_from_scores(const std::vector<double>& scores, int count, std::vector<int> forced_visible,
                          double ratio) {
  const int n = static_cast<int>(scores.size());
  std::sort(forced_visible.begin(), forced_visible.end());
  forced_visible.erase(std::unique(forced_visible.begin(), forced_visible.end()), forced_visible.end());
  std::vector<char> forced(static_cast<std::size_t>(n), 0);
  for (int i : forced_visible) forced.at(static_cast<std::size_t>(i)) = 1;

  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    if (!forced[static_cast<std::size_t>(i)]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  count = std::clamp(count, 0, static_cast<int>(order.size()));

  MaskPlan plan;
  plan.ratio = ratio;
  plan.masked.assign(order.begin(), order.begin() + count);
  std::sort(plan.masked.begin(), plan.masked.end());
  std::vector<char> is_masked(static_cast<std::size_t>(n), 0);
  for (int i : plan.masked) is_masked[static_cast<std::size_t>(i)] = 1;
  for (int i = 0; i < n; ++i) {
    if (!is_masked[static_cast<std::size_t>(i)]) plan.visible.push_back(i);
  }
  plan.forced_visible = std::move(forced_visible);
  return plan;
}

namespace {

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("mask ratio must lie in (0, 1)");
}

std::vector<double> base_probs(int n, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(n));
  for (double& v : p) v = uniform(rng, 0.0, 1.0);
  return p;
}

}  // namespace

MaskPlan random_mask_plan(const PatchGrid& grid, double ratio, Rng& rng) {
  check_ratio(ratio);
  const int n = grid.count();
  return plan_from_scores(base_probs(n, rng), masked_count(ratio, n), {}, ratio);
}

double patch_map_sum(const Image& map, const Mask& roi_mask, const PatchGrid& grid, int i) {
  if (i < 0 || i >= grid.count()) throw ArgumentError("patch index out of range");
  const auto& o = grid.origins[static_cast<std::size_t>(i)];
  double sum = 0.0;
  for (int r = o.row; r < o.row + grid.patch_size; ++r) {
    for (int c = o.col; c < o.col + grid.patch_size; ++c) {
      if (roi_mask(r, c)) sum += map(r, c);
    }
  }
  return sum;
}

std::vector<double> patch_eu_sums(const Image& eu_map, const Mask& roi_mask, const PatchGrid& grid) {
  std::vector<double> sums(static_cast<std::size_t>(grid.count()));
  for (int i = 0; i < grid.count(); ++i) sums[static_cast<std::size_t>(i)] = patch_map_sum(eu_map, roi_mask, grid, i);
  return sums;
}

std::vector<double> eu_weights(const std::vector<double>& eu_sums, double tau) {
  if (!(tau > 0.0)) throw ArgumentError("eu_weights: temperature must be positive");
  if (eu_sums.empty()) return {};
  const double peak = *std::max_element(eu_sums.begin(), eu_sums.end());
  std::vector<double> w(eu_sums.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp((eu_sums[i] - peak) / tau);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

MaskPlan eu_guided_plan(const PatchGrid& grid, const Image& eu_map, const Mask& roi_mask, double tau,
                        double ratio, Rng& rng) {
  check_ratio(ratio);
  const auto w = eu_weights(patch_eu_sums(eu_map, roi_mask, grid), tau);
  auto scores = base_probs(grid.count(), rng);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] *= w[i];
  return plan_from_scores(scores, masked_count(ratio, grid.count()), {}, ratio);
}

std::vector<int> patches_touching(const PatchGrid& grid, const Mask& pixels) {
  std::vector<int> out;
  for (int i = 0; i < grid.count(); ++i) {
    const auto& o = grid.origins[static_cast<std::size_t>(i)];
    bool hit = false;
    for (int r = o.row; r < o.row + grid.patch_size && !hit; ++r) {
      for (int c = o.col; c < o.col + grid.patch_size; ++c) {
        if (pixels(r, c)) {
          hit = true;
          break;
        }
      }
    }
    if (hit) out.push_back(i);
  }
  return out;
}

MaskPlan au_exclusion_plan(const PatchGrid& grid, const Image& au_map, const Mask& roi_mask,
                           double ratio, Rng& rng, const AuExclusionOptions& opts) {
  check_ratio(ratio);
  const Image filtered = percentile_filter(au_map, roi_mask, opts.quantile);
  const auto top = retain_top_ccs(cc_label(filtered, opts.connectivity), opts.top_k);
  Mask hot(au_map.height(), au_map.width(), 0);
  for (const auto& cc : top) {
    for (int p : cc.pixels) hot[static_cast<std::size_t>(p)] = 1;
  }
  auto forced = patches_touching(grid, hot);
  const int n = grid.count();
  const int count = std::min(masked_count(ratio, n), n - static_cast<int>(forced.size()));
  return plan_from_scores(base_probs(n, rng), count, std::move(forced), ratio);
}

}  // namespace u2ad
