#include "u2ad/cross_validation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "u2ad/errors.hpp"
#include "u2ad/random.hpp"

namespace u2ad {

std::vector<CvUnit> patient_units(const std::vector<ScoreRow>& rows) {
  std::vector<CvUnit> out;
  for (const auto& r : rows) out.push_back({r.case_id, 0, r.patient_score, r.is_anomalous});
  return out;
}

std::vector<CvUnit> segment_units(const std::vector<ScoreRow>& rows) {
  std::vector<CvUnit> out;
  for (const auto& r : rows) {
    for (int s = 1; s <= kSegmentCount; ++s) {
      const auto k = static_cast<std::size_t>(s - 1);
      if (!r.segment_present[k]) continue;
      const bool label = std::find(r.ground_truth_segments.begin(), r.ground_truth_segments.end(), s) !=
                         r.ground_truth_segments.end();
      out.push_back({r.case_id, s, r.segment_scores[k], label});
    }
  }
  return out;
}

std::vector<int> assign_folds(const std::vector<CvUnit>& units, const CvPlan& plan, int repeat) {
  if (plan.folds < 2) throw ArgumentError("cross-validation needs at least 2 folds");
  std::map<std::string, bool> cases;
  for (const auto& u : units) cases[u.case_id] = cases[u.case_id] || u.label;
  std::vector<std::string> pos, neg;
  for (const auto& [id, label] : cases) (label ? pos : neg).push_back(id);

  Rng rng(mix_seed(plan.seed, static_cast<std::uint64_t>(repeat)));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::map<std::string, int> fold_of;
  int next = 0;
  for (const auto* group : {&pos, &neg}) {
    for (const auto& id : *group) {
      fold_of[id] = next;
      next = (next + 1) % plan.folds;
    }
  }
  std::vector<int> out;
  out.reserve(units.size());
  for (const auto& u : units) out.push_back(fold_of.at(u.case_id));
  return out;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

CvResult cross_validate(const std::vector<CvUnit>& units, const CvPlan& plan, CvLevel level) {
  if (units.empty()) throw ArgumentError("cross_validate: no units");
  if (plan.repeats < 1) throw ArgumentError("cross_validate: repeats must be >= 1");
  CvResult res;
  std::vector<double> acc, f1, rec, spec;
  for (int rep = 0; rep < plan.repeats; ++rep) {
    const auto folds = assign_folds(units, plan, rep);
    for (int f = 0; f < plan.folds; ++f) {
      FoldResult fr;
      fr.repeat = rep;
      fr.fold = f;
      std::vector<double> fit_scores, test_scores;
      std::vector<bool> fit_labels, test_labels;
      for (std::size_t i = 0; i < units.size(); ++i) {
        if (folds[i] == f) {
          fr.test_units.push_back(i);
          test_scores.push_back(units[i].score);
          test_labels.push_back(units[i].label);
        } else {
          fr.fit_units.push_back(i);
          fit_scores.push_back(units[i].score);
          fit_labels.push_back(units[i].label);
        }
      }
      const auto n_pos = std::count(fit_labels.begin(), fit_labels.end(), true);
      const bool single_class = n_pos == 0 || n_pos == static_cast<long>(fit_labels.size());
      if (fr.test_units.empty() || (level == CvLevel::kPatient ? n_pos == 0 : single_class)) {
        fr.skipped = true;
        fr.note = fr.test_units.empty() ? "empty test fold" : "fit split lacks a required class";
        ++res.skipped;
        res.folds.push_back(std::move(fr));
        continue;
      }
      fr.threshold = level == CvLevel::kPatient
                         ? threshold_for_sensitivity(fit_scores, fit_labels, plan.target_sensitivity)
                         : threshold_for_f1(fit_scores, fit_labels).threshold;
      fr.metrics = detection_metrics(apply_threshold(test_scores, fr.threshold), test_labels);
      acc.push_back(fr.metrics.accuracy);
      f1.push_back(fr.metrics.f1);
      rec.push_back(fr.metrics.recall);
      spec.push_back(fr.metrics.specificity);
      ++res.evaluated;
      res.folds.push_back(std::move(fr));
    }
  }
  res.accuracy = summarize(acc);
  res.f1 = summarize(f1);
  res.recall = summarize(rec);
  res.specificity = summarize(spec);
  return res;
}

double localization_accuracy(const std::vector<ScoreRow>& rows) {
  int total = 0;
  int hits = 0;
  for (const auto& r : rows) {
    if (!r.is_anomalous) continue;
    ++total;
    Decisions d;
    d.segment_scores = r.segment_scores;
    d.segment_present = r.segment_present;
    const int best = argmax_segment(d);
    if (std::find(r.ground_truth_segments.begin(), r.ground_truth_segments.end(), best) !=
        r.ground_truth_segments.end()) {
      ++hits;
    }
  }
  return total ? static_cast<double>(hits) / total : 0.0;
}

}  // namespace u2ad
