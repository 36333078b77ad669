#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace u2ad {

template <class T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Shape of the asymmetric masked-reconstruction transformer.
struct ModelConfig {
  int image_height = 256;
  int image_width = 256;
  int patch_size = 8;
  int embed_dim = 128;
  int encoder_depth = 4;
  int decoder_depth = 2;
  int num_heads = 4;
  double mlp_ratio = 4.0;
  double edge_weight = 0.1;  ///< lambda in L_mse + lambda * L_edge

  int head_dim() const { return embed_dim / num_heads; }
  int mlp_hidden() const;
  int patch_dim() const { return patch_size * patch_size; }
  int lattice_rows() const { return image_height / patch_size; }
  int lattice_cols() const { return image_width / patch_size; }
  int lattice_positions() const { return lattice_rows() * lattice_cols(); }

  /// Throws ConfigError.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// A named tensor inside the flat parameter vector. Weights are (out x in), row-major.
struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct LinearSlots {
  TensorSlot weight;
  TensorSlot bias;
};

struct NormSlots {
  TensorSlot gain;
  TensorSlot bias;
};

struct BlockSlots {
  NormSlots norm1;
  LinearSlots qkv;
  LinearSlots proj;
  NormSlots norm2;
  LinearSlots fc1;
  LinearSlots fc2;
};

/// Offsets of every parameter tensor in the flat vector.
struct ParamLayout {
  LinearSlots patch_embed;
  TensorSlot class_token;
  std::vector<BlockSlots> encoder;
  NormSlots encoder_norm;
  LinearSlots decoder_embed;
  TensorSlot mask_token;
  std::vector<BlockSlots> decoder;
  NormSlots decoder_norm;
  LinearSlots pixel_head;
  LinearSlots edge_head;
  std::vector<TensorSlot> slots;  ///< all tensors in storage order
  std::size_t total = 0;

  static ParamLayout build(const ModelConfig& cfg);
};

/// One image under one mask plan, flattened into patch rows.
template <class T>
struct MaskedSample {
  MatrixT<T> visible_pixels;  ///< Nv x P^2
  std::vector<int> visible_positions;  ///< lattice indices
  std::vector<int> masked_positions;
  MatrixT<T> masked_pixels;  ///< Nm x P^2 reconstruction targets
  MatrixT<T> masked_edges;   ///< Nm x P^2 Sobel targets
};

template <class T>
struct Predictions {
  MatrixT<T> pixels;  ///< Nm x P^2
  MatrixT<T> edges;   ///< Nm x P^2
};

struct LossParts {
  double mse = 0.0;
  double edge = 0.0;
  double total = 0.0;
};

/// Forward and backward passes of the encoder-decoder over a flat parameter vector.
template <class T>
class Network {
 public:
  explicit Network(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  const MatrixT<T>& encoder_positions() const { return enc_pos_; }
  const MatrixT<T>& decoder_positions() const { return dec_pos_; }

  /// Class token + visible tokens through the encoder; (Nv + 1) x D.
  MatrixT<T> encode(std::span<const T> params, const MatrixT<T>& visible_pixels,
                    std::span<const int> visible_positions) const;

  /// Mask tokens for `masked_positions` appended to the encoder output, then pixel and edge heads.
  Predictions<T> decode(std::span<const T> params, const MatrixT<T>& embeddings,
                        std::span<const int> visible_positions, std::span<const int> masked_positions) const;

  Predictions<T> predict(std::span<const T> params, const MaskedSample<T>& sample) const;

  /// Loss of one sample; adds scale * dLoss/dparams into `grad`. If `target_grad` is
  /// non-null it receives dLoss/d(masked target pixels), Nm x P^2.
  LossParts loss_and_grad(std::span<const T> params, const MaskedSample<T>& sample, double edge_weight,
                          std::span<T> grad, T scale = T(1), MatrixT<T>* target_grad = nullptr) const;

 private:
  struct BlockTape;
  struct Tape;

  MatrixT<T> run_encoder(std::span<const T> params, const MatrixT<T>& visible_pixels,
                         std::span<const int> visible_positions, Tape* tape) const;
  Predictions<T> run_decoder(std::span<const T> params, const MatrixT<T>& embeddings,
                             std::span<const int> visible_positions, std::span<const int> masked_positions,
                             Tape* tape) const;
  MatrixT<T> block_forward(std::span<const T> params, const BlockSlots& b, const MatrixT<T>& x,
                           BlockTape* tape) const;
  MatrixT<T> block_backward(std::span<const T> params, const BlockSlots& b, const BlockTape& tape,
                            const MatrixT<T>& dout, std::span<T> grad) const;

  ModelConfig cfg_;
  ParamLayout layout_;
  MatrixT<T> enc_pos_;
  MatrixT<T> dec_pos_;
};

/// Fixed 2D sine-cosine encodings, one row per lattice position.
template <class T>
MatrixT<T> sincos_positions(int lattice_rows, int lattice_cols, int dim);

/// Sobel gradient magnitude with replicate padding.
template <class T>
MatrixT<T> sobel(const MatrixT<T>& in);

/// Adjoint of `sobel` at `in`: d(sum(upstream .* sobel(in)))/d(in).
template <class T>
MatrixT<T> sobel_backward(const MatrixT<T>& in, const MatrixT<T>& upstream);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace u2ad
