#include "u2ad/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "u2ad/errors.hpp"

namespace u2ad {

int McEnsemble::min_counter() const {
  int m = samples.empty() ? 0 : std::numeric_limits<int>::max();
  for (const auto& s : samples) m = std::min(m, static_cast<int>(s.size()));
  return m;
}

McEnsemble mc_sample(const PatchPredictor& predict, const PatchGrid& grid, double ratio, int K, Rng& rng) {
  if (K < 2) throw ArgumentError("mc_sample: K must be at least 2");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("mc_sample: ratio must lie in (0, 1)");
  const int n = grid.count();
  if (masked_count(ratio, n) == 0) throw ArgumentError("mc_sample: ratio masks no patch on this grid");
  McEnsemble ens;
  ens.patch_dim = grid.patch_size * grid.patch_size;
  ens.target = K;
  ens.samples.resize(static_cast<std::size_t>(n));
  const int cap = static_cast<int>(std::ceil(100.0 * K / ratio));
  while (ens.min_counter() < K) {
    if (ens.passes >= cap) throw RunawayError("mc_sample: pass cap reached");
    const MaskPlan plan = random_mask_plan(grid, ratio, rng);
    PatchPredictions pred = predict(plan);
    if (pred.size() != plan.masked.size()) throw ArgumentError("mc_sample: predictor returned wrong patch count");
    for (std::size_t k = 0; k < plan.masked.size(); ++k) {
      if (static_cast<int>(pred[k].size()) != ens.patch_dim) throw ArgumentError("mc_sample: wrong patch size");
      ens.samples[static_cast<std::size_t>(plan.masked[k])].push_back(std::move(pred[k]));
    }
    ++ens.passes;
  }
  return ens;
}

namespace {

struct PatchSummary {
  std::vector<double> mean;
  std::vector<double> var;
};

std::vector<PatchSummary> summarize(const McEnsemble& ens, const PatchGrid& grid, int K, Rng& rng) {
  if (K < 2) throw ArgumentError("estimate_maps: K must be at least 2");
  if (static_cast<int>(ens.samples.size()) != grid.count()) {
    throw ArgumentError("estimate_maps: ensemble does not match the grid");
  }
  const auto pd = static_cast<std::size_t>(ens.patch_dim);
  std::vector<PatchSummary> out(ens.samples.size());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ens.samples.size(); ++i) {
    const auto& list = ens.samples[i];
    if (static_cast<int>(list.size()) < K) throw IncompleteEnsembleError("estimate_maps: patch below K samples");
    idx.resize(list.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first K entries are a uniform K-subset.
    for (int s = 0; s < K; ++s) {
      const auto j = static_cast<std::size_t>(uniform_int(rng, s, static_cast<int>(idx.size()) - 1));
      std::swap(idx[static_cast<std::size_t>(s)], idx[j]);
    }
    auto& sum = out[i];
    sum.mean.assign(pd, 0.0);
    sum.var.assign(pd, 0.0);
    for (int s = 0; s < K; ++s) {
      const auto& rec = list[idx[static_cast<std::size_t>(s)]];
      for (std::size_t p = 0; p < pd; ++p) sum.mean[p] += rec[p];
    }
    for (double& m : sum.mean) m /= K;
    for (int s = 0; s < K; ++s) {
      const auto& rec = list[idx[static_cast<std::size_t>(s)]];
      for (std::size_t p = 0; p < pd; ++p) {
        const double d = rec[p] - sum.mean[p];
        sum.var[p] += d * d;
      }
    }
    for (double& v : sum.var) v /= (K - 1);
  }
  return out;
}

}  // namespace

UncertaintyMaps estimate_maps(const McEnsemble& ens, const Image& x, const Mask& roi, const PatchGrid& grid,
                              int K, Rng& rng) {
  if (!x.same_shape(roi) || !x.same_shape(grid.image_height, grid.image_width)) {
    throw ArgumentError("estimate_maps: shape mismatch");
  }
  const auto summary = summarize(ens, grid, K, rng);
  UncertaintyMaps maps{Image(x.height(), x.width(), 0.0), Image(x.height(), x.width(), 0.0), x};
  const int ps = grid.patch_size;
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& o = grid.origins[i];
    for (int r = 0; r < ps; ++r) {
      for (int c = 0; c < ps; ++c) {
        const int y = o.row + r;
        const int xx = o.col + c;
        if (!roi(y, xx)) continue;
        const auto p = static_cast<std::size_t>(r * ps + c);
        const double mu = summary[i].mean[p];
        maps.mean(y, xx) = mu;
        maps.au(y, xx) = std::abs(x(y, xx) - mu);
        maps.eu(y, xx) = summary[i].var[p];
      }
    }
  }
  return maps;
}

Image mean_reconstruction(const McEnsemble& ens, const Image& x, const Mask& roi, const PatchGrid& grid, int K,
                          Rng& rng) {
  return estimate_maps(ens, x, roi, grid, K, rng).mean;
}

UncertaintyMaps uncertainty_maps(const PatchPredictor& predict, const Image& x, const Mask& roi,
                                 const PatchGrid& grid, double ratio, int K, Rng& rng) {
  const McEnsemble ens = mc_sample(predict, grid, ratio, K, rng);
  UncertaintyMaps maps = estimate_maps(ens, x, roi, grid, K, rng);
  maps.passes = ens.passes;
  return maps;
}

double roi_mean(const Image& map, const Mask& roi) {
  if (!map.same_shape(roi)) throw ArgumentError("roi_mean: shape mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (roi[i]) {
      sum += map[i];
      ++n;
    }
  }
  if (n == 0) throw DegenerateInputError("roi_mean: empty ROI");
  return sum / static_cast<double>(n);
}

}  // namespace u2ad
