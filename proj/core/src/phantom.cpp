#include "u2ad/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "u2ad/components.hpp"
#include "u2ad/errors.hpp"

namespace u2ad {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Separable Gaussian blur with replicate borders.
Image gaussian_blur(const Image& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const int h = in.height();
  const int w = in.width();
  Image tmp(h, w);
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * in(r, std::clamp(c + i, 0, w - 1));
      }
      tmp(r, c) = acc;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * tmp(std::clamp(r + i, 0, h - 1), c);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

const char* segment_name(int segment) {
  static constexpr const char* kNames[] = {"none", "C2-3", "C3-4", "C4-5", "C5-6", "C6-7", "C7-T1"};
  if (segment < 0 || segment > kSegmentCount) return "invalid";
  return kNames[segment];
}

void PhantomConfig::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("phantom: image size must be positive");
  if (cord_top < 0 || cord_bottom > height || cord_bottom - cord_top < kSegmentCount) {
    throw ConfigError("phantom: cord rows must lie inside the image and span all segments");
  }
  if (sc_width_min <= 1.0 || sc_width_max < sc_width_min) {
    throw ConfigError("phantom: invalid spinal-cord width range");
  }
  if (width_variation < 0.0 || width_variation >= 1.0) {
    throw ConfigError("phantom: width_variation must lie in [0, 1)");
  }
  if (csf_margin_min < 0.0 || csf_margin_max < csf_margin_min) {
    throw ConfigError("phantom: invalid CSF margin range");
  }
  const double widest = sc_width_max * (1.0 + width_variation) + 2.0 * csf_margin_max +
                        2.0 * curve_amplitude_max;
  if (widest >= width) throw ConfigError("phantom: spinal cord does not fit inside the image");
  if (noise_sigma < 0.0 || edge_blur_sigma < 0.0 || intensity_jitter < 0.0) {
    throw ConfigError("phantom: noise, blur, and jitter must be non-negative");
  }
}

std::vector<int> CaseRecord::ground_truth_segments() const {
  std::set<int> s(anomaly_segments.begin(), anomaly_segments.end());
  return {s.begin(), s.end()};
}

int segment_for_row(const Mask& segment_labels, int row) {
  if (row < 0 || row >= segment_labels.height()) return 0;
  for (int c = 0; c < segment_labels.width(); ++c) {
    if (segment_labels(row, c)) return segment_labels(row, c);
  }
  return 0;
}

CaseRecord generate_phantom(std::uint64_t seed, const PhantomConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x7068616eULL));
  const int h = cfg.height;
  const int w = cfg.width;
  const int top = cfg.cord_top;
  const int bottom = cfg.cord_bottom;
  const double cord_len = bottom - top;

  const double width_base = uniform(rng, cfg.sc_width_min, cfg.sc_width_max);
  const double margin = uniform(rng, cfg.csf_margin_min, cfg.csf_margin_max);
  const double amp = uniform(rng, 0.0, cfg.curve_amplitude_max);
  const double curve_period = uniform(rng, 0.8, 1.6) * cord_len;
  const double curve_phase = uniform(rng, 0.0, kTwoPi);
  const double width_period = uniform(rng, 0.4, 0.9) * cord_len;
  const double width_phase = uniform(rng, 0.0, kTwoPi);
  const double mod_period = uniform(rng, 0.5, 1.0) * cord_len;
  const double mod_phase = uniform(rng, 0.0, kTwoPi);
  const double j = cfg.intensity_jitter;
  const double bg_level = cfg.background_intensity + uniform(rng, -j, j);
  const double sc_level = cfg.sc_intensity + uniform(rng, -j, j);
  const double csf_level = cfg.csf_intensity + uniform(rng, -j, j);

  CaseRecord rec;
  rec.seed = seed;
  rec.tissue_labels = Mask(h, w, kBackground);
  rec.roi_mask = Mask(h, w, 0);
  rec.segment_labels = Mask(h, w, 0);

  for (int r = top; r < bottom; ++r) {
    const double t = r - top;
    const double center = 0.5 * w + amp * std::sin(kTwoPi * t / curve_period + curve_phase);
    const double half =
        0.5 * width_base * (1.0 + cfg.width_variation * std::sin(kTwoPi * t / width_period + width_phase));
    const int segment = 1 + static_cast<int>(kSegmentCount * t / cord_len);
    for (int c = 0; c < w; ++c) {
      const double d = std::abs(c + 0.5 - center);
      if (d < half) {
        rec.tissue_labels(r, c) = kSpinalCord;
        rec.roi_mask(r, c) = 1;
        rec.segment_labels(r, c) = static_cast<std::uint8_t>(segment);
      } else if (d < half + margin) {
        rec.tissue_labels(r, c) = kCsf;
      }
    }
  }

  Image field(h, w);
  for (std::size_t i = 0; i < field.size(); ++i) {
    switch (rec.tissue_labels[i]) {
      case kSpinalCord: field[i] = sc_level; break;
      case kCsf: field[i] = csf_level; break;
      default: field[i] = bg_level; break;
    }
  }
  field = gaussian_blur(field, cfg.edge_blur_sigma);
  for (int r = 0; r < h; ++r) {
    const double m = 1.0 + cfg.modulation_amplitude * std::sin(kTwoPi * r / mod_period + mod_phase);
    for (int c = 0; c < w; ++c) {
      field(r, c) *= m;
      if (cfg.noise_sigma > 0.0) field(r, c) += normal(rng, 0.0, cfg.noise_sigma);
    }
  }
  rec.image = normalize(field);
  for (double& v : rec.image.values()) v = to_f32(v);
  return rec;
}

RegionStats region_stats(const Image& image, const Mask& tissue_labels) {
  if (!image.same_shape(tissue_labels)) throw ArgumentError("region_stats: shape mismatch");
  struct Welford {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void push(double x) {
      ++n;
      const double d = x - mean;
      mean += d / static_cast<double>(n);
      m2 += d * (x - mean);
    }
    double var() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  };
  Welford sc;
  Welford csf;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (tissue_labels[i] == kSpinalCord) sc.push(image[i]);
    else if (tissue_labels[i] == kCsf) csf.push(image[i]);
  }
  if (sc.n == 0 || csf.n == 0) throw DegenerateInputError("region_stats: empty SC or CSF class");
  return {sc.mean, sc.var(), csf.mean, csf.var()};
}

Mask rasterize_anomaly(const AnomalySpec& spec, const Mask& roi_mask) {
  Mask out(roi_mask.height(), roi_mask.width(), 0);
  const double a = 0.5 * spec.ellipse_width;
  const double b = 0.5 * spec.ellipse_length;
  if (a <= 0.0 || b <= 0.0) return out;
  const int r0 = std::max(0, static_cast<int>(std::floor(spec.center_row - b)));
  const int r1 = std::min(roi_mask.height() - 1, static_cast<int>(std::ceil(spec.center_row + b)));
  const int c0 = std::max(0, static_cast<int>(std::floor(spec.center_col - a)));
  const int c1 = std::min(roi_mask.width() - 1, static_cast<int>(std::ceil(spec.center_col + a)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dx = (c - spec.center_col) / a;
      const double dy = (r - spec.center_row) / b;
      if (dx * dx + dy * dy <= 1.0 && roi_mask(r, c)) out(r, c) = 1;
    }
  }
  return out;
}

AnomalySpec sample_anomaly(Rng& rng, const CaseRecord& host, const RegionStats& stats) {
  const Mask& roi = host.roi_mask;
  std::vector<int> sc_pixels;
  for (std::size_t i = 0; i < roi.size(); ++i) {
    if (roi[i]) sc_pixels.push_back(static_cast<int>(i));
  }
  if (sc_pixels.empty()) throw DegenerateInputError("sample_anomaly: empty spinal cord");

  constexpr int kMaxTries = 1000;
  constexpr double kMinInsideFraction = 0.6;
  const int w = roi.width();
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    const int p = sc_pixels[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(sc_pixels.size()) - 1))];
    AnomalySpec spec;
    spec.center_row = p / w;
    spec.center_col = p % w;
    int row_width = 0;
    for (int c = 0; c < w; ++c) row_width += roi(spec.center_row, c) ? 1 : 0;
    spec.ellipse_width = uniform(rng, 0.7, 1.0) * row_width;
    spec.ellipse_length = uniform(rng, 1.0, 4.0) * spec.ellipse_width;

    // Fit check: the ellipse must lie predominantly inside the cord and stay in one piece.
    const double a = 0.5 * spec.ellipse_width;
    const double b = 0.5 * spec.ellipse_length;
    long total = 0;
    for (int r = static_cast<int>(std::floor(spec.center_row - b));
         r <= static_cast<int>(std::ceil(spec.center_row + b)); ++r) {
      for (int c = static_cast<int>(std::floor(spec.center_col - a));
           c <= static_cast<int>(std::ceil(spec.center_col + a)); ++c) {
        const double dx = (c - spec.center_col) / a;
        const double dy = (r - spec.center_row) / b;
        if (dx * dx + dy * dy <= 1.0) ++total;
      }
    }
    const Mask inside = rasterize_anomaly(spec, roi);
    long n_inside = 0;
    for (auto v : inside.values()) n_inside += v;
    if (total == 0 || static_cast<double>(n_inside) < kMinInsideFraction * static_cast<double>(total)) {
      continue;
    }
    if (cc_label(inside, 8).size() != 1) continue;

    const double lo_mean = std::min(stats.sc_mean, stats.csf_mean);
    const double hi_mean = std::max(stats.sc_mean, stats.csf_mean);
    do {
      spec.signal_mean = uniform(rng, lo_mean, hi_mean);
    } while (spec.signal_mean <= lo_mean && hi_mean > lo_mean);
    const double lo_var = std::min(stats.sc_var, stats.csf_var);
    const double hi_var = std::max(stats.sc_var, stats.csf_var);
    spec.signal_var = hi_var > lo_var ? uniform(rng, lo_var, hi_var) : lo_var;
    return spec;
  }
  throw DegenerateInputError("sample_anomaly: no feasible placement found");
}

CaseRecord embed_anomalies(const CaseRecord& healthy, int n_anomalies, Rng& rng) {
  if (n_anomalies < 1 || n_anomalies > 3) {
    throw ArgumentError("embed_anomalies: n_anomalies must lie in [1, 3]");
  }
  if (healthy.is_anomalous) throw ArgumentError("embed_anomalies: case already anomalous");
  const RegionStats stats = region_stats(healthy.image, healthy.tissue_labels);

  CaseRecord out = healthy;
  Mask union_mask(healthy.image.height(), healthy.image.width(), 0);
  for (int k = 0; k < n_anomalies; ++k) {
    const AnomalySpec spec = sample_anomaly(rng, healthy, stats);
    const Mask region = rasterize_anomaly(spec, healthy.roi_mask);
    const double sd = std::sqrt(spec.signal_var);
    double row_sum = 0.0;
    long count = 0;
    for (std::size_t i = 0; i < region.size(); ++i) {
      if (!region[i]) continue;
      const double v = sd > 0.0 ? normal(rng, spec.signal_mean, sd) : spec.signal_mean;
      out.image[i] = to_f32(std::clamp(v, 0.0, 1.0));
      union_mask[i] = 1;
      row_sum += static_cast<double>(i / static_cast<std::size_t>(region.width()));
      ++count;
    }
    const int centroid_row = static_cast<int>(std::lround(row_sum / static_cast<double>(count)));
    out.anomalies.push_back(spec);
    out.anomaly_segments.push_back(segment_for_row(healthy.segment_labels, centroid_row));
  }
  out.anomaly_mask = std::move(union_mask);
  out.is_anomalous = true;
  return out;
}

Image normalize(const Image& image) {
  if (image.empty()) throw DegenerateInputError("normalize: empty image");
  const auto [lo, hi] = std::minmax_element(image.values().begin(), image.values().end());
  const double mn = *lo;
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw DegenerateInputError("normalize: constant image");
  Image out(image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = (image[i] - mn) / range;
  return out;
}

Image augment(const Image& image, Rng& rng, const AugmentConfig& cfg) {
  const double sd = std::sqrt(std::max(0.0, cfg.noise_var));
  Image noisy = image;
  if (sd > 0.0) {
    for (double& v : noisy.values()) v += normal(rng, 0.0, sd);
  }
  const double brightness = uniform(rng, cfg.brightness_lo, std::nextafter(cfg.brightness_hi, 1e300));
  const double contrast = uniform(rng, cfg.contrast_lo, std::nextafter(cfg.contrast_hi, 1e300));
  double mean = 0.0;
  for (double v : noisy.values()) mean += v;
  mean /= static_cast<double>(noisy.size());
  for (double& v : noisy.values()) v = (v * brightness - mean * brightness) * contrast + mean * brightness;
  return normalize(noisy);
}

}  // namespace u2ad
