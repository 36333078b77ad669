#include "u2ad/model.hpp"

#include <algorithm>
#include <cmath>

#include "u2ad/errors.hpp"

namespace u2ad {

std::size_t parameter_count(const ModelConfig& cfg) { return ParamLayout::build(cfg).total; }

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  const ParamLayout layout = ParamLayout::build(cfg);
  ModelParams params{cfg, ParamVector<float>(layout.total, 0.0f)};
  constexpr double kStd = 0.02;
  auto trunc_normal = [&] {
    for (;;) {
      const double z = normal(rng, 0.0, kStd);
      if (std::abs(z) <= 2.0 * kStd) return static_cast<float>(z);
    }
  };
  for (const auto& slot : layout.slots) {
    const auto& name = slot.name;
    const bool is_gain = name.ends_with(".gain");
    const bool is_weight = name.ends_with(".weight") || name == "class_token" || name == "mask_token";
    for (std::size_t i = 0; i < slot.size(); ++i) {
      float& v = params.values[slot.offset + i];
      if (is_gain) v = 1.0f;
      else if (is_weight) v = trunc_normal();
    }
  }
  return params;
}

std::uint64_t params_digest(const ModelParams& params) {
  return fnv1a(params.values.data(), params.values.size() * sizeof(float));
}

Image roi_image(const Image& x, const Mask& roi) {
  if (!x.same_shape(roi)) throw ArgumentError("roi_image: shape mismatch");
  Image out(x.height(), x.width(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (roi[i]) out[i] = x[i];
  }
  return out;
}

template <class T>
void copy_patch(const Image& x, const PatchGrid& grid, int i, T* out) {
  const auto& o = grid.origins.at(static_cast<std::size_t>(i));
  const int p = grid.patch_size;
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) out[r * p + c] = static_cast<T>(x(o.row + r, o.col + c));
  }
}

template <class T>
MaskedSample<T> gather_sample(const Image& x_roi, const PatchGrid& grid, const MaskPlan& plan, bool with_targets) {
  if (!x_roi.same_shape(grid.image_height, grid.image_width)) {
    throw ArgumentError("gather_sample: image does not match the grid");
  }
  const int pd = grid.patch_size * grid.patch_size;
  MaskedSample<T> s;
  s.visible_pixels.resize(static_cast<Eigen::Index>(plan.visible.size()), pd);
  for (std::size_t k = 0; k < plan.visible.size(); ++k) {
    copy_patch(x_roi, grid, plan.visible[k], s.visible_pixels.row(static_cast<Eigen::Index>(k)).data());
    s.visible_positions.push_back(grid.lattice_index(plan.visible[k]));
  }
  for (int i : plan.masked) s.masked_positions.push_back(grid.lattice_index(i));
  if (with_targets) {
    const auto nm = static_cast<Eigen::Index>(plan.masked.size());
    s.masked_pixels.resize(nm, pd);
    s.masked_edges.resize(nm, pd);
    const int ps = grid.patch_size;
    for (Eigen::Index k = 0; k < nm; ++k) {
      copy_patch(x_roi, grid, plan.masked[static_cast<std::size_t>(k)], s.masked_pixels.row(k).data());
      const MatrixT<T> patch = Eigen::Map<const MatrixT<T>>(s.masked_pixels.row(k).data(), ps, ps);
      const MatrixT<T> edges = sobel<T>(patch);
      s.masked_edges.row(k) = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(edges.data(), pd);
    }
  }
  return s;
}

template <class T>
LossParts recon_loss(const MaskedSample<T>& s, const Predictions<T>& pred, double edge_weight) {
  if (pred.pixels.rows() != s.masked_pixels.rows() || pred.pixels.cols() != s.masked_pixels.cols() ||
      pred.edges.rows() != s.masked_edges.rows() || pred.edges.cols() != s.masked_edges.cols()) {
    throw ArgumentError("recon_loss: predictions do not cover the masked set");
  }
  LossParts out;
  const double n = static_cast<double>(s.masked_pixels.size());
  if (n == 0) return out;
  out.mse = (pred.pixels - s.masked_pixels).template cast<double>().squaredNorm() / n;
  out.edge = (pred.edges - s.masked_edges).template cast<double>().squaredNorm() / n;
  out.total = out.mse + edge_weight * out.edge;
  return out;
}

double learning_rate(const AdamConfig& cfg, int epoch) {
  if (cfg.decay_every <= 0) return cfg.lr;
  return cfg.lr * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

AdamState init_adam(std::size_t n) { return {std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f), 0}; }

double train_step(const Network<float>& net, ModelParams& params, const std::vector<MaskedSample<float>>& batch,
                  AdamState& opt, const AdamConfig& cfg, double lr, const TargetGradHook& hook) {
  if (batch.empty()) throw ArgumentError("train_step: empty batch");
  const std::size_t n = params.values.size();
  if (opt.m.size() != n || opt.v.size() != n) throw ArgumentError("train_step: optimizer state size mismatch");
  ParamVector<float> grad(n, 0.0f);
  const float scale = 1.0f / static_cast<float>(batch.size());
  double loss = 0.0;
  MatrixT<float> target_grad;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LossParts parts = net.loss_and_grad(params.values, batch[i], net.config().edge_weight, grad, scale,
                                              hook ? &target_grad : nullptr);
    loss += parts.total;
    if (hook) hook(i, batch[i], target_grad);
  }
  loss /= static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw DivergenceError("train_step: non-finite loss");

  ++opt.step;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    const double m = b1 * opt.m[i] + (1.0 - b1) * g;
    const double v = b2 * opt.v[i] + (1.0 - b2) * g * g;
    opt.m[i] = static_cast<float>(m);
    opt.v[i] = static_cast<float>(v);
    const double update = lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    params.values[i] = static_cast<float>(params.values[i] - update);
  }
  return loss;
}

Reconstruction compose_reconstruction(const Image& x, const Mask& roi, const MatrixT<double>& predictions,
                                      const MaskPlan& plan, const PatchGrid& grid) {
  if (static_cast<std::size_t>(predictions.rows()) != plan.masked.size()) {
    throw ArgumentError("compose_reconstruction: one prediction row per masked patch required");
  }
  Reconstruction out{x, plan.masked};
  const int p = grid.patch_size;
  for (std::size_t k = 0; k < plan.masked.size(); ++k) {
    const auto& o = grid.origins.at(static_cast<std::size_t>(plan.masked[k]));
    for (int r = 0; r < p; ++r) {
      for (int c = 0; c < p; ++c) {
        if (!roi(o.row + r, o.col + c)) continue;
        out.image(o.row + r, o.col + c) = std::clamp(predictions(static_cast<Eigen::Index>(k), r * p + c), 0.0, 1.0);
      }
    }
  }
  return out;
}

PatchPredictor make_predictor(const Network<float>& net, const ModelParams& params, const Image& x,
                              const Mask& roi, const PatchGrid& grid) {
  return [&net, &params, x_roi = roi_image(x, roi), grid](const MaskPlan& plan) {
    const MaskedSample<float> sample = gather_sample<float>(x_roi, grid, plan, false);
    const Predictions<float> pred = net.predict(params.values, sample);
    PatchPredictions out(plan.masked.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
      const auto row = pred.pixels.row(static_cast<Eigen::Index>(k));
      out[k].assign(row.data(), row.data() + row.size());
    }
    return out;
  };
}

template void copy_patch<float>(const Image&, const PatchGrid&, int, float*);
template void copy_patch<double>(const Image&, const PatchGrid&, int, double*);
template MaskedSample<float> gather_sample<float>(const Image&, const PatchGrid&, const MaskPlan&, bool);
template MaskedSample<double> gather_sample<double>(const Image&, const PatchGrid&, const MaskPlan&, bool);
template LossParts recon_loss<float>(const MaskedSample<float>&, const Predictions<float>&, double);
template LossParts recon_loss<double>(const MaskedSample<double>&, const Predictions<double>&, double);

}  // namespace u2ad
