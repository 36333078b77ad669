#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "u2ad/errors.hpp"
#include "u2ad/robustness.hpp"

namespace u2ad {
namespace {

std::vector<CorpusCase> tiny_corpus(int n) {
  std::vector<CorpusCase> out;
  Rng rng(99);
  for (int i = 0; i < n; ++i) {
    CaseRecord rec = generate_phantom(static_cast<std::uint64_t>(1000 + i), test::tiny_phantom());
    if (i % 3 == 0) rec = embed_anomalies(rec, 1, rng);
    out.push_back({"t" + std::to_string(i), rec, build_patch_grid(rec.roi_mask, 8)});
  }
  return out;
}

TEST(AddNoise, ZeroVarianceIsIdentity) {
  Rng rng(1);
  const Image x = test::random_image(16, 16, rng);
  EXPECT_EQ(add_noise(x, 0.0, rng), x);
  EXPECT_THROW(add_noise(x, -0.1, rng), ArgumentError);
}

TEST(AddNoise, ClippedAndVarianceMatches) {
  Rng rng(2);
  const Image x(200, 200, 0.5);
  const Image y = add_noise(x, 0.001, rng);
  double s = 0.0, ss = 0.0;
  for (double v : y.values()) {
    s += v - 0.5;
    ss += (v - 0.5) * (v - 0.5);
  }
  const double n = static_cast<double>(y.size());
  EXPECT_NEAR(s / n, 0.0, 1e-3);
  EXPECT_NEAR(ss / n, 0.001, 1e-4);
  const Image z = add_noise(x, 0.4, rng);
  for (double v : z.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(DegradeResolution, FactorOneIsIdentity) {
  Rng rng(3);
  const Image x = test::random_image(32, 32, rng);
  EXPECT_EQ(degrade_resolution(x, 1), x);
  EXPECT_THROW(degrade_resolution(x, 3), ArgumentError);
  EXPECT_THROW(degrade_resolution(x, 0), ArgumentError);
}

TEST(DegradeResolution, ConstantAndBlockValues) {
  const Image c(16, 16, 0.25);
  for (double v : degrade_resolution(c, 4).values()) ASSERT_NEAR(v, 0.25, 1e-15);
  // Left half 0, right half 1: box means are exact, bilinear blends only across the seam.
  Image x(8, 8, 0.0);
  for (int r = 0; r < 8; ++r) {
    for (int col = 4; col < 8; ++col) x(r, col) = 1.0;
  }
  const Image y = degrade_resolution(x, 2);
  EXPECT_NEAR(y(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(y(0, 7), 1.0, 1e-15);
  EXPECT_NEAR(y(3, 3), 0.25, 1e-15);
  EXPECT_NEAR(y(3, 4), 0.75, 1e-15);
}

TEST(DegradeResolution, BilinearMatchesDirectFormula) {
  Rng rng(4);
  const Image x = test::random_image(8, 8, rng);
  const Image y = degrade_resolution(x, 4);
  const double a = (x(0, 0) + x(0, 1) + x(0, 2) + x(0, 3) + x(1, 0) + x(1, 1) + x(1, 2) + x(1, 3) + x(2, 0) + x(2, 1) +
                    x(2, 2) + x(2, 3) + x(3, 0) + x(3, 1) + x(3, 2) + x(3, 3)) /
                   16.0;
  EXPECT_NEAR(y(0, 0), a, 1e-12);
  double b = 0.0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 4; c < 8; ++c) b += x(r, c);
  }
  b /= 16.0;
  // Column 4 samples source coordinate (4.5 / 4) - 0.5 = 0.625 between the two low-res columns.
  EXPECT_NEAR(y(0, 4), 0.375 * a + 0.625 * b, 1e-12);
}

TEST(DetectCorpus, OrderIndependentAndTimed) {
  const auto cases = tiny_corpus(4);
  Rng init(5);
  const ModelParams p = init_model(test::tiny_model(), init);
  const Network<float> net(p.config);
  DetectionConfig cfg;
  cfg.mc_samples = 3;
  std::vector<double> secs;
  const auto fwd = detect_corpus(net, p, cases, cfg, 6, {}, &secs);
  auto rev = cases;
  std::reverse(rev.begin(), rev.end());
  const auto bwd = detect_corpus(net, p, rev, cfg, 6);
  ASSERT_EQ(secs.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(fwd[i].case_id, cases[i].id);
    EXPECT_EQ(fwd[i].ano_map, bwd[3 - i].ano_map);
    EXPECT_GE(secs[i], 0.0);
  }
}

TEST(Sweeps, TableShapesAndNeutralLevels) {
  const auto cases = tiny_corpus(10);
  Rng init(7);
  const ModelParams p = init_model(test::tiny_model(), init);
  const Network<float> net(p.config);
  DetectionConfig cfg;
  cfg.mc_samples = 2;
  const CvPlan plan{2, 1, 8, 0.9};
  const auto rob = robustness_sweep(net, p, cases, {0.0, 0.1}, {1, 2, 4}, cfg, plan, 9);
  ASSERT_EQ(rob.size(), 5u);
  EXPECT_EQ(rob[0].kind, "noise");
  EXPECT_EQ(rob[1].level, 0.1);
  EXPECT_EQ(rob[2].kind, "downsample");
  EXPECT_EQ(rob[4].level, 4.0);
  // Zero noise and factor 1 both reproduce the unperturbed run.
  const auto base = score_rows(detect_corpus(net, p, cases, cfg, 9));
  const CvResult ref = cross_validate(patient_units(base), plan, CvLevel::kPatient);
  EXPECT_EQ(rob[0].patient.f1.mean, ref.f1.mean);
  EXPECT_EQ(rob[2].patient.f1.mean, ref.f1.mean);
  EXPECT_EQ(rob[0].localization, localization_accuracy(base));

  const auto ks = k_sweep(net, p, cases, {2, 4}, cfg, plan, 9);
  ASSERT_EQ(ks.size(), 2u);
  EXPECT_EQ(ks[0].kind, "K");
  EXPECT_EQ(ks[1].level, 4.0);
  EXPECT_GT(ks[1].seconds_per_image, 0.0);
}

}  // namespace
}  // namespace u2ad
