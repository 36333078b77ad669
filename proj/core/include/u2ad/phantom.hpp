#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "u2ad/random.hpp"
#include "u2ad/raster.hpp"

namespace u2ad {

enum Tissue : std::uint8_t { kBackground = 0, kSpinalCord = 1, kCsf = 2 };

inline constexpr int kSegmentCount = 6;

/// Segment names for labels 1..6.
const char* segment_name(int segment);

/// Geometry and contrast of a synthetic sagittal spinal-cord phantom.
///
/// The cord is a vertical band whose centerline and width vary smoothly with
/// the row; CSF flanks it on both sides. A smooth multiplicative modulation
/// along the long axis and a mild partial-volume blur make reconstruction
/// nontrivial. The intensity fields describe one acquisition "domain"; the
/// pretraining and target corpora use different domains.
struct PhantomConfig {
  int height = 256;
  int width = 256;
  int cord_top = 16;      ///< first cord row
  int cord_bottom = 240;  ///< one past the last cord row
  double sc_width_min = 10.0;
  double sc_width_max = 16.0;
  double width_variation = 0.15;  ///< relative amplitude of the width modulation
  double csf_margin_min = 3.0;
  double csf_margin_max = 6.0;
  double curve_amplitude_max = 8.0;  ///< px, centerline sway

  double background_intensity = 0.10;
  double sc_intensity = 0.40;
  double csf_intensity = 0.90;
  double intensity_jitter = 0.04;
  double modulation_amplitude = 0.12;  ///< relative, along the long axis
  double edge_blur_sigma = 0.8;
  double noise_sigma = 0.02;

  void validate() const;
};

struct RegionStats {
  double sc_mean = 0.0;
  double sc_var = 0.0;
  double csf_mean = 0.0;
  double csf_var = 0.0;
};

struct AnomalySpec {
  int center_row = 0;
  int center_col = 0;
  double ellipse_width = 0.0;   ///< across the cord
  double ellipse_length = 0.0;  ///< along the cord
  double signal_mean = 0.0;
  double signal_var = 0.0;
};

struct CaseRecord {
  Image image;
  Mask roi_mask;
  Mask tissue_labels;
  Mask segment_labels;
  std::optional<Mask> anomaly_mask;
  std::uint64_t seed = 0;
  bool is_anomalous = false;
  std::vector<AnomalySpec> anomalies;
  std::vector<int> anomaly_segments;  ///< segment of each anomaly's centroid, in anomaly order

  /// Sorted unique segment ground truth.
  std::vector<int> ground_truth_segments() const;
};

/// Healthy phantom; a pure function of (seed, cfg).
CaseRecord generate_phantom(std::uint64_t seed, const PhantomConfig& cfg);

RegionStats region_stats(const Image& image, const Mask& tissue_labels);

/// Draws one pseudo-anomaly placed inside the cord of `host`.
AnomalySpec sample_anomaly(Rng& rng, const CaseRecord& host, const RegionStats& stats);

/// Pixels of the ellipse described by `spec`, intersected with the cord.
Mask rasterize_anomaly(const AnomalySpec& spec, const Mask& roi_mask);

/// Returns a copy of `healthy` with 1..3 pseudo-anomalies written into the cord.
CaseRecord embed_anomalies(const CaseRecord& healthy, int n_anomalies, Rng& rng);

/// Min-max normalization to [0, 1].
Image normalize(const Image& image);

struct AugmentConfig {
  double noise_var = 0.02;
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
  double contrast_lo = 0.8;
  double contrast_hi = 1.2;
};

/// Training-time augmentation: additive Gaussian noise, brightness and
/// contrast scaling, then re-normalization to [0, 1].
Image augment(const Image& image, Rng& rng, const AugmentConfig& cfg = {});

/// Segment label for a row of the cord, or 0 if the row is outside it.
int segment_for_row(const Mask& segment_labels, int row);

}  // namespace u2ad
