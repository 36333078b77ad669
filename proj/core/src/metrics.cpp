#include "u2ad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "u2ad/errors.hpp"

namespace u2ad {

Confusion confusion(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (predictions.size() != labels.size()) throw ArgumentError("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) (predictions[i] ? c.tp : c.fn)++;
    else (predictions[i] ? c.fp : c.tn)++;
  }
  return c;
}

namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

DetectionMetrics metrics_from(const Confusion& c) {
  DetectionMetrics m;
  const double n = c.tp + c.fp + c.fn + c.tn;
  m.accuracy = ratio(c.tp + c.tn, n);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.f1 = ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn);
  return m;
}

DetectionMetrics detection_metrics(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
  if (labels.empty()) throw ArgumentError("detection_metrics: empty input");
  return metrics_from(confusion(predictions, labels));
}

std::vector<bool> apply_threshold(const std::vector<double>& scores, double threshold) {
  std::vector<bool> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold;
  return out;
}

double threshold_for_sensitivity(const std::vector<double>& scores, const std::vector<bool>& labels, double target) {
  if (scores.size() != labels.size()) throw ArgumentError("threshold_for_sensitivity: length mismatch");
  if (!(target > 0.0 && target <= 1.0)) throw ArgumentError("threshold_for_sensitivity: target must lie in (0, 1]");
  std::vector<double> pos;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) pos.push_back(scores[i]);
  }
  if (pos.empty()) throw ArgumentError("threshold_for_sensitivity: no positive labels");
  std::sort(pos.begin(), pos.end(), std::greater<>());
  const auto m = static_cast<std::size_t>(std::ceil(target * static_cast<double>(pos.size()) - 1e-12));
  return std::nextafter(pos[std::max<std::size_t>(m, 1) - 1], -std::numeric_limits<double>::infinity());
}

F1Threshold threshold_for_f1(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ArgumentError("threshold_for_f1: length mismatch");
  const bool any_pos = std::find(labels.begin(), labels.end(), true) != labels.end();
  const bool any_neg = std::find(labels.begin(), labels.end(), false) != labels.end();
  if (!any_pos || !any_neg) throw ArgumentError("threshold_for_f1: both classes are required");

  std::vector<double> uniq = scores;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<double> candidates;
  candidates.push_back(std::nextafter(uniq.front(), -std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i) candidates.push_back(0.5 * (uniq[i] + uniq[i + 1]));

  F1Threshold best{candidates.front(), -1.0};
  for (double t : candidates) {
    const double f1 = metrics_from(confusion(apply_threshold(scores, t), labels)).f1;
    if (f1 >= best.f1) best = {t, f1};
  }
  return best;
}

double psnr(double mse) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim_roi(const Image& x, const Image& y, const Mask& roi) {
  if (!x.same_shape(y) || !x.same_shape(roi)) throw ArgumentError("ssim: shape mismatch");
  constexpr int kRadius = 5;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double kernel[2 * kRadius + 1];
  for (int i = -kRadius; i <= kRadius; ++i) kernel[i + kRadius] = std::exp(-(i * i) / (2 * kSigma * kSigma));

  double total = 0.0;
  std::size_t count = 0;
  for (int r = 0; r < x.height(); ++r) {
    for (int c = 0; c < x.width(); ++c) {
      if (!roi(r, c)) continue;
      double wsum = 0, mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int dr = -kRadius; dr <= kRadius; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= x.height()) continue;
        for (int dc = -kRadius; dc <= kRadius; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= x.width()) continue;
          const double w = kernel[dr + kRadius] * kernel[dc + kRadius];
          const double a = x(rr, cc);
          const double b = y(rr, cc);
          wsum += w;
          mx += w * a;
          my += w * b;
          sxx += w * a * a;
          syy += w * b * b;
          sxy += w * a * b;
        }
      }
      mx /= wsum;
      my /= wsum;
      const double vx = sxx / wsum - mx * mx;
      const double vy = syy / wsum - my * my;
      const double cov = sxy / wsum - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  if (count == 0) throw ArgumentError("ssim: empty ROI");
  return total / static_cast<double>(count);
}

ReconMetrics recon_metrics(const Image& x, const Image& x_hat, const Mask& roi, const Image& eu_map) {
  if (!x.same_shape(x_hat) || !x.same_shape(roi) || !x.same_shape(eu_map)) {
    throw ArgumentError("recon_metrics: shape mismatch");
  }
  double se = 0.0;
  double eu = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!roi[i]) continue;
    const double d = x[i] - x_hat[i];
    se += d * d;
    eu += eu_map[i];
    ++n;
  }
  if (n == 0) throw ArgumentError("recon_metrics: empty ROI");
  ReconMetrics m;
  m.mse = se / static_cast<double>(n);
  m.psnr = psnr(m.mse);
  m.ssim = ssim_roi(x, x_hat, roi);
  m.variance = eu / static_cast<double>(n);
  return m;
}

}  // namespace u2ad
