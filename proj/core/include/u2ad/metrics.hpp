#pragma once

#include <vector>

#include "u2ad/raster.hpp"

namespace u2ad {

struct Confusion {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
};

/// Anomalous is the positive class. A ratio with a zero denominator is reported as 0.
struct DetectionMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double recall = 0.0;  ///< sensitivity
  double specificity = 0.0;
  double precision = 0.0;
};

Confusion confusion(const std::vector<bool>& predictions, const std::vector<bool>& labels);
DetectionMetrics metrics_from(const Confusion& c);

/// Throws ArgumentError on empty or mismatched input.
DetectionMetrics detection_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels);

/// Flags score > threshold.
std::vector<bool> apply_threshold(const std::vector<double>& scores, double threshold);

/// Largest t with recall(score > t) >= target: just below the m-th largest positive score,
/// m = ceil(target * positives). Throws ArgumentError without positives.
double threshold_for_sensitivity(const std::vector<double>& scores, const std::vector<bool>& labels,
                                 double target = 0.90);

struct F1Threshold {
  double threshold = 0.0;
  double f1 = 0.0;
};

/// Exhaustive scan over midpoints of sorted unique scores (plus one candidate below the
/// minimum); ties go to the larger threshold. Throws ArgumentError unless both classes occur.
F1Threshold threshold_for_f1(const std::vector<double>& scores, const std::vector<bool>& labels);

struct ReconMetrics {
  double mse = 0.0;
  double psnr = 0.0;  ///< +infinity when mse == 0
  double ssim = 0.0;
  double variance = 0.0;  ///< mean EU over the ROI
};

/// Peak-1 PSNR over ROI pixels.
double psnr(double mse);

/// Mean of the SSIM map over ROI pixels; 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, unit dynamic range. Windows are truncated and renormalized at the border.
double ssim_roi(const Image& x, const Image& y, const Mask& roi);

/// Throws ArgumentError on an empty ROI or mismatched shapes.
ReconMetrics recon_metrics(const Image& x, const Image& x_hat, const Mask& roi, const Image& eu_map);

}  // namespace u2ad
