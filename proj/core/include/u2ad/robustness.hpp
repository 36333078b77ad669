#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "u2ad/cross_validation.hpp"
#include "u2ad/detection.hpp"

namespace u2ad {

/// Additive zero-mean Gaussian noise of the given variance, clipped to [0, 1].
Image add_noise(const Image& x, double variance, Rng& rng);

/// Box-average downsampling by `factor`, then bilinear upsampling back to the input size
/// (half-pixel centers, edge clamped). Factor 1 returns the input unchanged.
Image degrade_resolution(const Image& x, int factor);

struct CorpusCase {
  std::string id;
  CaseRecord record;
  PatchGrid grid;
};

/// Replaces a case's image before detection; ROI and labels are untouched.
using ImageTransform = std::function<Image(const Image& image, std::size_t case_index)>;

/// Runs detection on every case. Each case draws from its own stream keyed by (seed, id),
/// so results do not depend on corpus order. Optional per-case wall times in seconds.
std::vector<AnomalyReport> detect_corpus(const Network<float>& net, const ModelParams& params,
                                         const std::vector<CorpusCase>& cases, const DetectionConfig& cfg,
                                         std::uint64_t seed, const ImageTransform& transform = {},
                                         std::vector<double>* seconds = nullptr);

std::vector<ScoreRow> score_rows(const std::vector<AnomalyReport>& reports);

struct SweepRow {
  std::string kind;  ///< "K", "noise" or "downsample"
  double level = 0.0;
  CvResult patient;
  CvResult segment;
  double localization = 0.0;
  double seconds_per_image = 0.0;
};

/// Detection and cross-validated metrics for each K.
std::vector<SweepRow> k_sweep(const Network<float>& net, const ModelParams& params,
                              const std::vector<CorpusCase>& cases, const std::vector<int>& ks,
                              const DetectionConfig& cfg, const CvPlan& plan, std::uint64_t seed);

/// Detection and metrics under each noise variance, then each downsampling factor.
std::vector<SweepRow> robustness_sweep(const Network<float>& net, const ModelParams& params,
                                       const std::vector<CorpusCase>& cases, const std::vector<double>& noise_vars,
                                       const std::vector<int>& factors, const DetectionConfig& cfg,
                                       const CvPlan& plan, std::uint64_t seed);

}  // namespace u2ad
