#include "u2ad/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>

#include "u2ad/errors.hpp"

namespace u2ad {

Image anomaly_map(const PatchPredictor& predict, const Image& x, const Mask& roi, const PatchGrid& grid, int K,
                  double ratio, Rng& rng) {
  const McEnsemble ens = mc_sample(predict, grid, ratio, K, rng);
  const Image mean = mean_reconstruction(ens, x, roi, grid, K, rng);
  Image out(x.height(), x.width(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (roi[i]) out[i] = std::abs(x[i] - mean[i]);
  }
  return out;
}

std::vector<double> anomaly_curve(const Image& map, const Mask& roi) {
  if (!map.same_shape(roi)) throw ArgumentError("anomaly_curve: shape mismatch");
  std::vector<double> curve(static_cast<std::size_t>(map.height()), 0.0);
  for (int r = 0; r < map.height(); ++r) {
    double sum = 0.0;
    int width = 0;
    for (int c = 0; c < map.width(); ++c) {
      if (roi(r, c)) {
        sum += map(r, c);
        ++width;
      }
    }
    if (width > 0) curve[static_cast<std::size_t>(r)] = sum / width;
  }
  return curve;
}

std::vector<int> row_segments(const Mask& segment_labels) {
  std::vector<int> out(static_cast<std::size_t>(segment_labels.height()));
  for (int r = 0; r < segment_labels.height(); ++r) out[static_cast<std::size_t>(r)] = segment_for_row(segment_labels, r);
  return out;
}

Decisions score_and_decide(const std::vector<double>& curve, const std::vector<int>& segments, double patient_threshold,
                           double segment_threshold) {
  if (curve.size() != segments.size()) throw ArgumentError("score_and_decide: curve and segment rows differ");
  Decisions d;
  for (std::size_t j = 0; j < curve.size(); ++j) {
    d.patient_score = std::max(d.patient_score, curve[j]);
    const int s = segments[j];
    if (s < 1 || s > kSegmentCount) continue;
    const auto k = static_cast<std::size_t>(s - 1);
    d.segment_scores[k] = d.segment_present[k] ? std::max(d.segment_scores[k], curve[j]) : curve[j];
    d.segment_present[k] = true;
  }
  for (std::size_t k = 0; k < d.segment_flags.size(); ++k) {
    d.segment_flags[k] = d.segment_present[k] && d.segment_scores[k] > segment_threshold;
  }
  d.patient_flag = d.patient_score > patient_threshold;
  return d;
}

AnomalyReport postprocess(const Image& ano_map, const Mask& roi, const Mask& segment_labels,
                          const DetectionConfig& cfg) {
  AnomalyReport rep;
  rep.ano_map = ano_map;
  const Image filtered = percentile_filter(ano_map, roi, cfg.quantile);
  rep.retained = retain_top_ccs(cc_label(filtered, cfg.connectivity), cfg.top_k);
  rep.filtered_map = keep_components(filtered, rep.retained);
  rep.curve = anomaly_curve(cfg.curve_from_postprocessed ? rep.filtered_map : ano_map, roi);
  const double inf = std::numeric_limits<double>::infinity();
  rep.decisions = score_and_decide(rep.curve, row_segments(segment_labels), inf, inf);
  return rep;
}

AnomalyReport detect_case(const PatchPredictor& predict, const CaseRecord& record, const PatchGrid& grid,
                          const DetectionConfig& cfg, Rng& rng) {
  const Image map = anomaly_map(predict, record.image, record.roi_mask, grid, cfg.mc_samples, cfg.ratio, rng);
  AnomalyReport rep = postprocess(map, record.roi_mask, record.segment_labels, cfg);
  rep.is_anomalous = record.is_anomalous;
  rep.ground_truth_segments = record.ground_truth_segments();
  return rep;
}

int argmax_segment(const Decisions& d) {
  int best = 0;
  for (int s = 1; s <= kSegmentCount; ++s) {
    const auto k = static_cast<std::size_t>(s - 1);
    if (!d.segment_present[k]) continue;
    if (best == 0 || d.segment_scores[k] > d.segment_scores[static_cast<std::size_t>(best - 1)]) best = s;
  }
  return best;
}

ScoreRow score_row(const AnomalyReport& report) {
  return {report.case_id, report.decisions.patient_score, report.decisions.segment_scores,
          report.decisions.segment_present, report.is_anomalous, report.ground_truth_segments};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_score_table(std::ostream& out, const std::vector<ScoreRow>& rows) {
  out << "case_id,patient_score";
  for (int s = 1; s <= kSegmentCount; ++s) out << ",seg" << s;
  out << ",is_anomalous,gt_segments\n";
  for (const auto& r : rows) {
    out << r.case_id << ',' << fmt(r.patient_score);
    for (std::size_t k = 0; k < r.segment_scores.size(); ++k) {
      out << ',' << (r.segment_present[k] ? fmt(r.segment_scores[k]) : std::string("NA"));
    }
    out << ',' << (r.is_anomalous ? 1 : 0) << ',';
    for (std::size_t i = 0; i < r.ground_truth_segments.size(); ++i) {
      out << (i ? ";" : "") << r.ground_truth_segments[i];
    }
    out << '\n';
  }
}

std::vector<ScoreRow> read_score_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("case_id,patient_score", 0) != 0) {
    throw IoError("score table: missing header");
  }
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 4 + kSegmentCount) throw IoError("score table: bad row: " + line);
    ScoreRow r;
    try {
      r.case_id = f[0];
      r.patient_score = std::stod(f[1]);
      for (std::size_t k = 0; k < static_cast<std::size_t>(kSegmentCount); ++k) {
        r.segment_present[k] = f[2 + k] != "NA";
        r.segment_scores[k] = r.segment_present[k] ? std::stod(f[2 + k]) : 0.0;
      }
      r.is_anomalous = f[2 + kSegmentCount] == "1";
      std::stringstream gs(f[3 + kSegmentCount]);
      while (std::getline(gs, cell, ';')) {
        if (!cell.empty()) r.ground_truth_segments.push_back(std::stoi(cell));
      }
    } catch (const std::logic_error&) {
      throw IoError("score table: bad number in row: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace u2ad
