#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "u2ad/detection.hpp"
#include "u2ad/metrics.hpp"

namespace u2ad {

enum class CvLevel { kPatient, kSegment };

/// One scored decision unit. Patient level uses segment 0.
struct CvUnit {
  std::string case_id;
  int segment = 0;
  double score = 0.0;
  bool label = false;
};

/// Patient units: one per case, labeled by the case's anomaly flag.
std::vector<CvUnit> patient_units(const std::vector<ScoreRow>& rows);
/// Segment units: one per present segment, labeled by membership in the ground-truth segments.
std::vector<CvUnit> segment_units(const std::vector<ScoreRow>& rows);

struct CvPlan {
  int folds = 5;
  int repeats = 1;
  std::uint64_t seed = 0;
  double target_sensitivity = 0.90;
};

/// Fold index per case for one repeat. Cases are sorted by id, stratified by whether any
/// unit of the case is positive, shuffled with a (seed, repeat) stream and dealt round-robin.
/// Every unit of a case shares its case's fold.
std::vector<int> assign_folds(const std::vector<CvUnit>& units, const CvPlan& plan, int repeat);

struct FoldResult {
  int repeat = 0;
  int fold = 0;
  bool skipped = false;
  std::string note;
  double threshold = 0.0;
  DetectionMetrics metrics;
  std::vector<std::size_t> fit_units;
  std::vector<std::size_t> test_units;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation; 0 for a single value
};

struct CvResult {
  std::vector<FoldResult> folds;
  MetricSummary accuracy, f1, recall, specificity;
  int evaluated = 0;
  int skipped = 0;
};

/// Fit the threshold on the other folds (sensitivity rule for patients, F1 rule for
/// segments) and evaluate on the held-out fold, for every repeat and fold. Folds whose fit
/// split lacks a required class are skipped and recorded.
CvResult cross_validate(const std::vector<CvUnit>& units, const CvPlan& plan, CvLevel level);

MetricSummary summarize(const std::vector<double>& values);

/// Fraction of anomalous cases whose highest-scoring segment is one of their ground-truth segments.
double localization_accuracy(const std::vector<ScoreRow>& rows);

}  // namespace u2ad
