#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "u2ad/network.hpp"
#include "u2ad/patching.hpp"
#include "u2ad/random.hpp"
#include "u2ad/raster.hpp"

namespace u2ad {

/// Parameter and gradient storage. Alignment is fixed so vectorized reductions sum in the
/// same order in every process.
template <class T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct ParamsT {
  ModelConfig config;
  ParamVector<T> values;
};

/// Trained weights live in single precision; gradient checks use ParamsT<double>.
using ModelParams = ParamsT<float>;

std::size_t parameter_count(const ModelConfig& cfg);

/// Truncated-normal (sigma 0.02) weights and tokens, zero biases, unit norm gains.
ModelParams init_model(const ModelConfig& cfg, Rng& rng);

template <class U, class T>
ParamsT<U> cast_params(const ParamsT<T>& in) {
  ParamsT<U> out{in.config, {}};
  out.values.assign(in.values.begin(), in.values.end());
  return out;
}

std::uint64_t params_digest(const ModelParams& params);

/// x restricted to the ROI (zero elsewhere); the model sees and reconstructs this image.
Image roi_image(const Image& x, const Mask& roi);

/// Flattened P x P pixels of grid patch i.
template <class T>
void copy_patch(const Image& x, const PatchGrid& grid, int i, T* out);

/// Builds encoder inputs and (optionally) reconstruction targets for one image under one plan.
template <class T>
MaskedSample<T> gather_sample(const Image& x_roi, const PatchGrid& grid, const MaskPlan& plan,
                              bool with_targets = true);

/// Standalone dual loss: mean squared pixel error over masked patches plus
/// edge_weight times the mean squared error between edge predictions and Sobel targets.
template <class T>
LossParts recon_loss(const MaskedSample<T>& sample, const Predictions<T>& pred, double edge_weight);

struct AdamConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  int decay_every = 50;  ///< epochs; <= 0 disables decay
  double decay_factor = 0.1;
};

/// Step-decayed learning rate at a zero-based epoch.
double learning_rate(const AdamConfig& cfg, int epoch);

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t step = 0;
};

AdamState init_adam(std::size_t n);

/// Observes dLoss/d(masked target pixels), Nm x P^2, for each sample of a step;
/// used to audit which pixels contribute gradient.
using TargetGradHook =
    std::function<void(std::size_t sample_index, const MaskedSample<float>& sample, const MatrixT<float>& grad)>;

/// One Adam update on the mean loss of `batch`. Throws DivergenceError on a non-finite loss.
double train_step(const Network<float>& net, ModelParams& params, const std::vector<MaskedSample<float>>& batch,
                  AdamState& opt, const AdamConfig& cfg, double lr, const TargetGradHook& hook = {});

struct Reconstruction {
  Image image;
  std::vector<int> masked;  ///< patch indices that were predicted
};

/// Input image with the ROI pixels of masked patches replaced by clipped predictions.
Reconstruction compose_reconstruction(const Image& x, const Mask& roi, const MatrixT<double>& predictions,
                                      const MaskPlan& plan, const PatchGrid& grid);

/// Per-masked-patch pixel predictions (plan.masked order), each P*P values.
using PatchPredictions = std::vector<std::vector<double>>;

/// Produces predictions for the masked patches of a plan on a fixed image.
using PatchPredictor = std::function<PatchPredictions(const MaskPlan& plan)>;

/// Binds a trained network to one image.
PatchPredictor make_predictor(const Network<float>& net, const ModelParams& params, const Image& x,
                              const Mask& roi, const PatchGrid& grid);

}  // namespace u2ad
