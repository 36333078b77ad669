#include "u2ad/robustness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "u2ad/errors.hpp"

namespace u2ad {

Image add_noise(const Image& x, double variance, Rng& rng) {
  if (variance < 0.0) throw ArgumentError("add_noise: negative variance");
  if (variance == 0.0) return x;
  Image out = x;
  const double sd = std::sqrt(variance);
  for (double& v : out.values()) v = std::clamp(v + normal(rng, 0.0, sd), 0.0, 1.0);
  return out;
}

Image degrade_resolution(const Image& x, int factor) {
  if (factor < 1 || x.height() % factor != 0 || x.width() % factor != 0) {
    throw ArgumentError("degrade_resolution: factor must divide the image size");
  }
  if (factor == 1) return x;
  const int h = x.height() / factor;
  const int w = x.width() / factor;
  Image small(h, w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int dr = 0; dr < factor; ++dr) {
        for (int dc = 0; dc < factor; ++dc) s += x(r * factor + dr, c * factor + dc);
      }
      small(r, c) = s / (factor * factor);
    }
  }
  Image out(x.height(), x.width(), 0.0);
  for (int r = 0; r < x.height(); ++r) {
    const double sr = std::clamp((r + 0.5) / factor - 0.5, 0.0, h - 1.0);
    const int r0 = static_cast<int>(std::floor(sr));
    const int r1 = std::min(r0 + 1, h - 1);
    const double fr = sr - r0;
    for (int c = 0; c < x.width(); ++c) {
      const double sc = std::clamp((c + 0.5) / factor - 0.5, 0.0, w - 1.0);
      const int c0 = static_cast<int>(std::floor(sc));
      const int c1 = std::min(c0 + 1, w - 1);
      const double fc = sc - c0;
      out(r, c) = (1 - fr) * ((1 - fc) * small(r0, c0) + fc * small(r0, c1)) +
                  fr * ((1 - fc) * small(r1, c0) + fc * small(r1, c1));
    }
  }
  return out;
}

std::vector<AnomalyReport> detect_corpus(const Network<float>& net, const ModelParams& params,
                                         const std::vector<CorpusCase>& cases, const DetectionConfig& cfg,
                                         std::uint64_t seed, const ImageTransform& transform,
                                         std::vector<double>* seconds) {
  std::vector<AnomalyReport> out;
  out.reserve(cases.size());
  if (seconds) seconds->clear();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    CaseRecord record = c.record;
    if (transform) record.image = transform(c.record.image, i);
    Rng rng(mix_seed(seed, fnv1a(c.id.data(), c.id.size())));
    const auto t0 = std::chrono::steady_clock::now();
    const auto predictor = make_predictor(net, params, record.image, record.roi_mask, c.grid);
    AnomalyReport rep = detect_case(predictor, record, c.grid, cfg, rng);
    const auto t1 = std::chrono::steady_clock::now();
    if (seconds) seconds->push_back(std::chrono::duration<double>(t1 - t0).count());
    rep.case_id = c.id;
    out.push_back(std::move(rep));
  }
  return out;
}

std::vector<ScoreRow> score_rows(const std::vector<AnomalyReport>& reports) {
  std::vector<ScoreRow> rows;
  rows.reserve(reports.size());
  for (const auto& r : reports) rows.push_back(score_row(r));
  return rows;
}

namespace {

SweepRow evaluate(std::string kind, double level, const std::vector<AnomalyReport>& reports, const CvPlan& plan) {
  SweepRow row;
  row.kind = std::move(kind);
  row.level = level;
  const auto rows = score_rows(reports);
  row.patient = cross_validate(patient_units(rows), plan, CvLevel::kPatient);
  row.segment = cross_validate(segment_units(rows), plan, CvLevel::kSegment);
  row.localization = localization_accuracy(rows);
  return row;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::vector<SweepRow> k_sweep(const Network<float>& net, const ModelParams& params,
                              const std::vector<CorpusCase>& cases, const std::vector<int>& ks,
                              const DetectionConfig& cfg, const CvPlan& plan, std::uint64_t seed) {
  std::vector<SweepRow> out;
  for (int k : ks) {
    DetectionConfig c = cfg;
    c.mc_samples = k;
    std::vector<double> secs;
    const auto reports = detect_corpus(net, params, cases, c, seed, {}, &secs);
    SweepRow row = evaluate("K", k, reports, plan);
    row.seconds_per_image = mean(secs);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<SweepRow> robustness_sweep(const Network<float>& net, const ModelParams& params,
                                       const std::vector<CorpusCase>& cases, const std::vector<double>& noise_vars,
                                       const std::vector<int>& factors, const DetectionConfig& cfg,
                                       const CvPlan& plan, std::uint64_t seed) {
  std::vector<SweepRow> out;
  for (double var : noise_vars) {
    const ImageTransform noisy = [&](const Image& x, std::size_t i) {
      Rng rng(mix_seed(seed ^ 0x6e6f697365ULL, i));
      return add_noise(x, var, rng);
    };
    std::vector<double> secs;
    const auto reports = detect_corpus(net, params, cases, cfg, seed, noisy, &secs);
    SweepRow row = evaluate("noise", var, reports, plan);
    row.seconds_per_image = mean(secs);
    out.push_back(std::move(row));
  }
  for (int f : factors) {
    const ImageTransform low = [f](const Image& x, std::size_t) { return degrade_resolution(x, f); };
    std::vector<double> secs;
    const auto reports = detect_corpus(net, params, cases, cfg, seed, low, &secs);
    SweepRow row = evaluate("downsample", f, reports, plan);
    row.seconds_per_image = mean(secs);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace u2ad
