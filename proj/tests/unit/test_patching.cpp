#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "u2ad/errors.hpp"
#include "u2ad/patching.hpp"
#include "u2ad/phantom.hpp"

namespace u2ad {
namespace {

PatchGrid full_grid(int side, int p = 8) { return build_patch_grid(test::full_mask(side, side), p); }

void expect_partition(const MaskPlan& plan, int n) {
  std::vector<int> all = plan.masked;
  all.insert(all.end(), plan.visible.begin(), plan.visible.end());
  std::sort(all.begin(), all.end());
  std::vector<int> expected(static_cast<std::size_t>(n));
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(all, expected);
  EXPECT_TRUE(std::is_sorted(plan.masked.begin(), plan.masked.end()));
  EXPECT_TRUE(std::is_sorted(plan.visible.begin(), plan.visible.end()));
}

TEST(PatchGrid, AlignedBlockGivesOnePatch) {
  Mask roi(64, 64, 0);
  for (int r = 16; r < 24; ++r) {
    for (int c = 8; c < 16; ++c) roi(r, c) = 1;
  }
  const PatchGrid g = build_patch_grid(roi, 8);
  ASSERT_EQ(g.count(), 1);
  EXPECT_EQ(g.origins[0], (PatchOrigin{16, 8}));
  EXPECT_EQ(g.lattice_index(0), 2 * 8 + 1);
}

TEST(PatchGrid, FullImageGives1024Patches) { EXPECT_EQ(full_grid(256).count(), 1024); }

TEST(PatchGrid, MatchesLatticeScanOracle) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const CaseRecord rec = generate_phantom(seed, {});
    const PatchGrid g = build_patch_grid(rec.roi_mask, 8);
    std::vector<PatchOrigin> oracle;
    for (int lr = 0; lr < 32; ++lr) {
      for (int lc = 0; lc < 32; ++lc) {
        int hits = 0;
        for (int r = 0; r < 8; ++r) {
          for (int c = 0; c < 8; ++c) hits += rec.roi_mask(lr * 8 + r, lc * 8 + c);
        }
        if (hits) oracle.push_back({lr * 8, lc * 8});
      }
    }
    EXPECT_EQ(g.origins, oracle);
  }
}

TEST(PatchGrid, EmptyRoiAndBadPatchSizeThrow) {
  EXPECT_THROW(build_patch_grid(Mask(64, 64, 0), 8), DegenerateInputError);
  EXPECT_THROW(build_patch_grid(Mask(60, 64, 1), 8), ArgumentError);
}

TEST(RandomMask, SeventyFivePercentOfHundred) {
  Mask roi(80, 80, 1);
  const PatchGrid g = build_patch_grid(roi, 8);
  ASSERT_EQ(g.count(), 100);
  Rng rng(1);
  const MaskPlan plan = random_mask_plan(g, 0.75, rng);
  EXPECT_EQ(plan.masked.size(), 75u);
  expect_partition(plan, 100);
}

TEST(RandomMask, SizeExactAcrossRatios) {
  const PatchGrid g = full_grid(96);
  Rng rng(2);
  for (double r : {0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95}) {
    for (int t = 0; t < 20; ++t) {
      const MaskPlan plan = random_mask_plan(g, r, rng);
      ASSERT_EQ(static_cast<int>(plan.masked.size()), static_cast<int>(std::floor(r * g.count() + 1e-9))) << r;
      expect_partition(plan, g.count());
    }
  }
}

TEST(RandomMask, TinyRatioMasksNothing) {
  const PatchGrid g = full_grid(16);
  Rng rng(3);
  const MaskPlan plan = random_mask_plan(g, 0.2, rng);
  EXPECT_TRUE(plan.masked.empty());
  EXPECT_EQ(plan.visible.size(), 4u);
}

TEST(RandomMask, InvalidRatioThrows) {
  const PatchGrid g = full_grid(16);
  Rng rng(3);
  EXPECT_THROW(random_mask_plan(g, 0.0, rng), ArgumentError);
  EXPECT_THROW(random_mask_plan(g, 1.0, rng), ArgumentError);
}

TEST(RandomMask, UniformFrequencies) {
  Mask roi(8, 64, 1);
  const PatchGrid g = build_patch_grid(roi, 8);
  ASSERT_EQ(g.count(), 8);
  Rng rng(4);
  std::vector<int> hits(8, 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    for (int i : random_mask_plan(g, 0.5, rng).masked) hits[static_cast<std::size_t>(i)]++;
  }
  for (int h : hits) EXPECT_NEAR(h / double(draws), 0.5, 0.02);
}

TEST(PatchSums, ZeroAndOne) {
  const PatchGrid g = full_grid(32);
  const Mask roi = test::full_mask(32, 32);
  for (double v : patch_eu_sums(Image(32, 32, 0.0), roi, g)) EXPECT_EQ(v, 0.0);
  for (double v : patch_eu_sums(Image(32, 32, 1.0), roi, g)) EXPECT_EQ(v, 64.0);
}

TEST(PatchSums, MatchesPixelLoopOracle) {
  const CaseRecord rec = generate_phantom(9, {});
  const PatchGrid g = build_patch_grid(rec.roi_mask, 8);
  Rng rng(5);
  const Image eu = test::random_image(256, 256, rng);
  const auto sums = patch_eu_sums(eu, rec.roi_mask, g);
  std::vector<double> oracle(static_cast<std::size_t>(g.count()), 0.0);
  for (int r = 0; r < 256; ++r) {
    for (int c = 0; c < 256; ++c) {
      if (!rec.roi_mask(r, c)) continue;
      for (int i = 0; i < g.count(); ++i) {
        const auto& o = g.origins[static_cast<std::size_t>(i)];
        if (r >= o.row && r < o.row + 8 && c >= o.col && c < o.col + 8) oracle[static_cast<std::size_t>(i)] += eu(r, c);
      }
    }
  }
  for (std::size_t i = 0; i < sums.size(); ++i) EXPECT_NEAR(sums[i], oracle[i], 1e-9);
}

TEST(EuWeights, EqualSumsGiveUniformWeights) {
  const auto w = eu_weights(std::vector<double>(7, 3.3), 1.0);
  for (double v : w) EXPECT_NEAR(v, 1.0 / 7.0, 1e-15);
}

TEST(EuWeights, LowTemperatureLimit) {
  const auto w = eu_weights({0.0, 0.5}, 1e-4);
  EXPECT_NEAR(w[0], 0.0, 1e-12);
  EXPECT_NEAR(w[1], 1.0, 1e-12);
}

TEST(EuWeights, MatchesDirectSoftmax) {
  const auto w = eu_weights({1.0, 2.0, 3.0}, 1.0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(w[0], std::exp(1.0) / z, 1e-9);
  EXPECT_NEAR(w[1], std::exp(2.0) / z, 1e-9);
  EXPECT_NEAR(w[2], std::exp(3.0) / z, 1e-9);
  EXPECT_NEAR(w[0], 0.0900, 5e-5);
  EXPECT_NEAR(w[1], 0.2447, 5e-5);
  EXPECT_NEAR(w[2], 0.6652, 5e-5);
}

TEST(EuWeights, RandomInputsMatchDirectEvaluation) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(20);
    for (double& v : s) v = uniform(rng, 0.0, 5.0);
    const double tau = uniform(rng, 0.1, 3.0);
    const auto w = eu_weights(s, tau);
    double z = 0.0;
    for (double v : s) z += std::exp(v / tau);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(w[i], std::exp(s[i] / tau) / z, 1e-9);
  }
}

TEST(EuWeights, NonPositiveTemperatureThrows) { EXPECT_THROW(eu_weights({1.0}, 0.0), ArgumentError); }

TEST(EuGuided, UniformEuEqualsRandomMasking) {
  const PatchGrid g = full_grid(64);
  const Mask roi = test::full_mask(64, 64);
  Rng a(7);
  Rng b(7);
  for (int t = 0; t < 50; ++t) {
    const MaskPlan p = eu_guided_plan(g, Image(64, 64, 0.25), roi, 1.0, 0.75, a);
    const MaskPlan q = random_mask_plan(g, 0.75, b);
    ASSERT_EQ(p.masked, q.masked);
  }
}

TEST(EuGuided, DominantPatchAlmostAlwaysMasked) {
  const PatchGrid g = full_grid(64);
  const Mask roi = test::full_mask(64, 64);
  Image eu(64, 64, 0.0);
  for (int r = 8; r < 16; ++r) {
    for (int c = 16; c < 24; ++c) eu(r, c) = 1.0;
  }
  const int hot = 1 * 8 + 2;
  Rng rng(8);
  int hits = 0;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const MaskPlan p = eu_guided_plan(g, eu, roi, 0.5, 0.75, rng);
    ASSERT_EQ(p.masked.size(), 48u);
    hits += std::binary_search(p.masked.begin(), p.masked.end(), hot);
  }
  EXPECT_GE(hits, static_cast<int>(0.99 * draws));
}

TEST(EuGuided, InfiniteTemperatureMatchesRandomFrequencies) {
  Mask roi(8, 64, 1);
  const PatchGrid g = build_patch_grid(roi, 8);
  Rng rng(9);
  Image eu(8, 64, 0.0);
  for (int c = 0; c < 64; ++c) eu(0, c) = c / 64.0;
  std::vector<int> hits(8, 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    for (int i : eu_guided_plan(g, eu, roi, 1e12, 0.5, rng).masked) hits[static_cast<std::size_t>(i)]++;
  }
  for (int h : hits) EXPECT_NEAR(h / double(draws), 0.5, 0.02);
}

Image blob_map(int side, const std::vector<std::pair<PatchOrigin, double>>& blobs) {
  Image au(side, side, 0.0);
  for (const auto& [o, v] : blobs) {
    for (int r = o.row; r < o.row + 3; ++r) {
      for (int c = o.col; c < o.col + 3; ++c) au(r, c) = v / 9.0;
    }
  }
  return au;
}

TEST(AuExclusion, ZeroAuEqualsRandomMasking) {
  const PatchGrid g = full_grid(64);
  const Mask roi = test::full_mask(64, 64);
  Rng a(10);
  Rng b(10);
  for (int t = 0; t < 20; ++t) {
    const MaskPlan p = au_exclusion_plan(g, Image(64, 64, 0.0), roi, 0.75, a);
    const MaskPlan q = random_mask_plan(g, 0.75, b);
    ASSERT_TRUE(p.forced_visible.empty());
    ASSERT_EQ(p.masked, q.masked);
  }
}

TEST(AuExclusion, SingleBlobNeverMasked) {
  const PatchGrid g = full_grid(64);
  const Mask roi = test::full_mask(64, 64);
  // Blob straddles four patches.
  const Image au = blob_map(64, {{{23, 23}, 5.0}});
  Rng rng(11);
  AuExclusionOptions opts;
  opts.quantile = 0.2;
  for (int t = 0; t < 200; ++t) {
    const MaskPlan p = au_exclusion_plan(g, au, roi, 0.75, rng, opts);
    ASSERT_EQ(p.forced_visible, (std::vector<int>{2 * 8 + 2, 2 * 8 + 3, 3 * 8 + 2, 3 * 8 + 3}));
    for (int f : p.forced_visible) ASSERT_FALSE(std::binary_search(p.masked.begin(), p.masked.end(), f));
    ASSERT_EQ(p.masked.size(), 48u);
  }
}

TEST(AuExclusion, TopThreeOfFiveBlobsExcluded) {
  const PatchGrid g = full_grid(64);
  const Mask roi = test::full_mask(64, 64);
  const std::vector<std::pair<PatchOrigin, double>> blobs = {
      {{2, 2}, 4.0}, {{2, 42}, 10.0}, {{26, 18}, 2.0}, {{50, 2}, 8.0}, {{50, 50}, 6.0}};
  const Image au = blob_map(64, blobs);
  // Oracle: rank blobs by summed value, keep the three largest, collect their patches.
  std::vector<std::size_t> order{0, 1, 2, 3, 4};
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return blobs[a].second > blobs[b].second; });
  std::vector<int> expected;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& o = blobs[order[k]].first;
    expected.push_back((o.row / 8) * 8 + o.col / 8);
  }
  std::sort(expected.begin(), expected.end());
  Rng rng(12);
  for (double q : {0.2, 0.95}) {
    AuExclusionOptions opts;
    opts.quantile = q;
    const MaskPlan p = au_exclusion_plan(g, au, roi, 0.75, rng, opts);
    EXPECT_EQ(p.forced_visible, expected) << q;
  }
}

TEST(PlanFromScores, TiesGoToLowerIndex) {
  const MaskPlan p = plan_from_scores({1.0, 2.0, 2.0, 0.5}, 2, {}, 0.5);
  EXPECT_EQ(p.masked, (std::vector<int>{1, 2}));
  const MaskPlan q = plan_from_scores({1.0, 1.0, 1.0, 1.0}, 2, {0}, 0.5);
  EXPECT_EQ(q.masked, (std::vector<int>{1, 2}));
  EXPECT_EQ(q.forced_visible, (std::vector<int>{0}));
}

}  // namespace
}  // namespace u2ad
