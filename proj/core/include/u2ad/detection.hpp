#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "u2ad/components.hpp"
#include "u2ad/model.hpp"
#include "u2ad/phantom.hpp"
#include "u2ad/uncertainty.hpp"

namespace u2ad {

struct DetectionConfig {
  int mc_samples = 10;  ///< K
  double ratio = 0.75;
  double quantile = 0.20;
  int top_k = 3;
  int connectivity = 8;
  bool curve_from_postprocessed = true;
};

/// |x - mean of K masked reconstructions| on ROI pixels, 0 elsewhere.
Image anomaly_map(const PatchPredictor& predict, const Image& x, const Mask& roi, const PatchGrid& grid, int K,
                  double ratio, Rng& rng);

/// Per-row mean of `map` over the ROI pixels of that row; rows without ROI give 0.
std::vector<double> anomaly_curve(const Image& map, const Mask& roi);

/// Segment label of every row (0 outside the cord).
std::vector<int> row_segments(const Mask& segment_labels);

struct Decisions {
  std::array<double, kSegmentCount> segment_scores{};
  std::array<bool, kSegmentCount> segment_present{};
  std::array<bool, kSegmentCount> segment_flags{};
  double patient_score = 0.0;
  bool patient_flag = false;
};

/// Segment score = max of the curve over the segment's rows; patient score = max of the curve.
/// Flags are score > threshold; segments without rows score 0 and are never flagged.
Decisions score_and_decide(const std::vector<double>& curve, const std::vector<int>& segments, double patient_threshold,
                           double segment_threshold);

struct AnomalyReport {
  std::string case_id;
  Image ano_map;
  Image filtered_map;  ///< after the percentile filter and top-k retention
  std::vector<ConnectedComponent> retained;
  std::vector<double> curve;
  Decisions decisions;
  bool is_anomalous = false;           ///< ground truth, when known
  std::vector<int> ground_truth_segments;
};

/// Percentile filter, CC labeling, top-k retention, AnoCurve and threshold-free scores.
AnomalyReport postprocess(const Image& ano_map, const Mask& roi, const Mask& segment_labels,
                          const DetectionConfig& cfg);

/// The full per-case pipeline from a bound predictor.
AnomalyReport detect_case(const PatchPredictor& predict, const CaseRecord& record, const PatchGrid& grid,
                          const DetectionConfig& cfg, Rng& rng);

/// Segment whose score is largest (1-based); ties go to the lower segment; 0 if none present.
int argmax_segment(const Decisions& d);

/// One row per case: id, patient score, six segment scores, ground-truth flag and segments.
struct ScoreRow {
  std::string case_id;
  double patient_score = 0.0;
  std::array<double, kSegmentCount> segment_scores{};
  std::array<bool, kSegmentCount> segment_present{};
  bool is_anomalous = false;
  std::vector<int> ground_truth_segments;
};

ScoreRow score_row(const AnomalyReport& report);

void write_score_table(std::ostream& out, const std::vector<ScoreRow>& rows);
/// Throws IoError on malformed input.
std::vector<ScoreRow> read_score_table(std::istream& in);

}  // namespace u2ad
