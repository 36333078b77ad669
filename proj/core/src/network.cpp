#include "u2ad/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "u2ad/errors.hpp"

namespace u2ad {

int ModelConfig::mlp_hidden() const {
  return static_cast<int>(std::lround(embed_dim * mlp_ratio));
}

void ModelConfig::validate() const {
  if (patch_size <= 0 || image_height <= 0 || image_width <= 0) {
    throw ConfigError("model: sizes must be positive");
  }
  if (image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw ConfigError("model: patch size must divide the image size");
  }
  if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
    throw ConfigError("model: embed_dim must be divisible by num_heads");
  }
  if (embed_dim % 4 != 0) throw ConfigError("model: embed_dim must be a multiple of 4");
  if (encoder_depth < 1) throw ConfigError("model: encoder_depth must be >= 1");
  if (decoder_depth < 0) throw ConfigError("model: decoder_depth must be >= 0");
  if (mlp_ratio <= 0.0 || mlp_hidden() < 1) throw ConfigError("model: mlp_ratio must be positive");
  if (edge_weight < 0.0) throw ConfigError("model: edge_weight must be >= 0");
}

ParamLayout ParamLayout::build(const ModelConfig& cfg) {
  cfg.validate();
  ParamLayout lay;
  const int d = cfg.embed_dim;
  const int pd = cfg.patch_dim();
  const int hid = cfg.mlp_hidden();
  auto add = [&](const std::string& name, int rows, int cols) {
    TensorSlot s{name, lay.total, rows, cols};
    lay.total += s.size();
    lay.slots.push_back(s);
    return s;
  };
  auto linear = [&](const std::string& name, int out, int in) {
    LinearSlots l;
    l.weight = add(name + ".weight", out, in);
    l.bias = add(name + ".bias", 1, out);
    return l;
  };
  auto norm = [&](const std::string& name) {
    NormSlots n;
    n.gain = add(name + ".gain", 1, d);
    n.bias = add(name + ".bias", 1, d);
    return n;
  };
  auto block = [&](const std::string& name) {
    BlockSlots b;
    b.norm1 = norm(name + ".norm1");
    b.qkv = linear(name + ".attn.qkv", 3 * d, d);
    b.proj = linear(name + ".attn.proj", d, d);
    b.norm2 = norm(name + ".norm2");
    b.fc1 = linear(name + ".mlp.fc1", hid, d);
    b.fc2 = linear(name + ".mlp.fc2", d, hid);
    return b;
  };

  lay.patch_embed = linear("patch_embed", d, pd);
  lay.class_token = add("class_token", 1, d);
  for (int i = 0; i < cfg.encoder_depth; ++i) lay.encoder.push_back(block("encoder." + std::to_string(i)));
  lay.encoder_norm = norm("encoder_norm");
  lay.decoder_embed = linear("decoder_embed", d, d);
  lay.mask_token = add("mask_token", 1, d);
  for (int i = 0; i < cfg.decoder_depth; ++i) lay.decoder.push_back(block("decoder." + std::to_string(i)));
  lay.decoder_norm = norm("decoder_norm");
  lay.pixel_head = linear("pixel_head", pd, d);
  lay.edge_head = linear("edge_head", pd, d);
  return lay;
}

template <class T>
MatrixT<T> sincos_positions(int lattice_rows, int lattice_cols, int dim) {
  const int quarter = dim / 4;
  MatrixT<T> pos(lattice_rows * lattice_cols, dim);
  for (int gr = 0; gr < lattice_rows; ++gr) {
    for (int gc = 0; gc < lattice_cols; ++gc) {
      const int p = gr * lattice_cols + gc;
      for (int i = 0; i < quarter; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
        pos(p, i) = static_cast<T>(std::sin(gr * omega));
        pos(p, quarter + i) = static_cast<T>(std::cos(gr * omega));
        pos(p, 2 * quarter + i) = static_cast<T>(std::sin(gc * omega));
        pos(p, 3 * quarter + i) = static_cast<T>(std::cos(gc * omega));
      }
    }
  }
  return pos;
}

namespace {

constexpr double kLnEps = 1e-6;

template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
Eigen::Map<const MatrixT<T>> cmap(std::span<const T> p, const TensorSlot& s) {
  return {p.data() + s.offset, s.rows, s.cols};
}

template <class T>
Eigen::Map<const RowVec<T>> cvec(std::span<const T> p, const TensorSlot& s) {
  return {p.data() + s.offset, static_cast<Eigen::Index>(s.size())};
}

template <class T>
Eigen::Map<MatrixT<T>> gmap(std::span<T> g, const TensorSlot& s) {
  return {g.data() + s.offset, s.rows, s.cols};
}

template <class T>
Eigen::Map<RowVec<T>> gvec(std::span<T> g, const TensorSlot& s) {
  return {g.data() + s.offset, static_cast<Eigen::Index>(s.size())};
}

template <class T>
MatrixT<T> linear_forward(std::span<const T> p, const LinearSlots& l, const MatrixT<T>& x) {
  MatrixT<T> y(x.rows(), l.weight.rows);
  y.noalias() = x * cmap(p, l.weight).transpose();
  y.rowwise() += cvec(p, l.bias);
  return y;
}

// Accumulates weight/bias gradients and returns dX.
template <class T>
MatrixT<T> linear_backward(std::span<const T> p, const LinearSlots& l, const MatrixT<T>& x,
                           const MatrixT<T>& dy, std::span<T> g) {
  gmap(g, l.weight).noalias() += dy.transpose() * x;
  gvec(g, l.bias) += dy.colwise().sum();
  MatrixT<T> dx(dy.rows(), l.weight.cols);
  dx.noalias() = dy * cmap(p, l.weight);
  return dx;
}

template <class T>
struct NormTape {
  MatrixT<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <class T>
MatrixT<T> norm_forward(std::span<const T> p, const NormSlots& n, const MatrixT<T>& x, NormTape<T>* tape) {
  const auto d = x.cols();
  MatrixT<T> xhat(x.rows(), d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix();
    const T var = centered.squaredNorm() / static_cast<T>(d);
    rstd(r) = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    xhat.row(r) = centered * rstd(r);
  }
  MatrixT<T> y = (xhat.array().rowwise() * cvec(p, n.gain).array()).matrix();
  y.rowwise() += cvec(p, n.bias);
  if (tape) {
    tape->xhat = std::move(xhat);
    tape->rstd = std::move(rstd);
  }
  return y;
}

template <class T>
MatrixT<T> norm_backward(std::span<const T> p, const NormSlots& n, const NormTape<T>& tape,
                         const MatrixT<T>& dy, std::span<T> g) {
  gvec(g, n.gain) += (dy.array() * tape.xhat.array()).matrix().colwise().sum();
  gvec(g, n.bias) += dy.colwise().sum();
  const MatrixT<T> dxhat = (dy.array().rowwise() * cvec(p, n.gain).array()).matrix();
  const auto d = static_cast<T>(dy.cols());
  MatrixT<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T mean_d = dxhat.row(r).sum() / d;
    const T mean_dx = dxhat.row(r).dot(tape.xhat.row(r)) / d;
    dx.row(r) = ((dxhat.row(r).array() - mean_d - tape.xhat.row(r).array() * mean_dx) * tape.rstd(r)).matrix();
  }
  return dx;
}

template <class T>
T gelu(T x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  return T(0.5) * x * (T(1) + std::tanh(static_cast<T>(k) * (x + T(0.044715) * x * x * x)));
}

template <class T>
T gelu_grad(T x) {
  constexpr double k = 0.7978845608028654;
  const T u = static_cast<T>(k) * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  const T du = static_cast<T>(k) * (T(1) + T(3 * 0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

}  // namespace

template <class T>
struct Network<T>::BlockTape {
  MatrixT<T> x;
  NormTape<T> norm1;
  MatrixT<T> a;
  MatrixT<T> qkv;
  std::vector<MatrixT<T>> attn;
  MatrixT<T> o;
  MatrixT<T> x1;
  NormTape<T> norm2;
  MatrixT<T> c;
  MatrixT<T> h;
  MatrixT<T> gact;
};

template <class T>
struct Network<T>::Tape {
  // Encoder.
  MatrixT<T> visible_pixels;
  std::vector<BlockTape> enc_blocks;
  NormTape<T> enc_norm;
  MatrixT<T> enc_out;
  // Decoder.
  std::vector<BlockTape> dec_blocks;
  NormTape<T> dec_norm;
  MatrixT<T> masked_tokens;  // normalized decoder rows of the masked patches
  Eigen::Index n_enc_tokens = 0;
};

template <class T>
Network<T>::Network(ModelConfig cfg)
    : cfg_(cfg),
      layout_(ParamLayout::build(cfg)),
      enc_pos_(sincos_positions<T>(cfg.lattice_rows(), cfg.lattice_cols(), cfg.embed_dim)),
      dec_pos_(sincos_positions<T>(cfg.lattice_rows(), cfg.lattice_cols(), cfg.embed_dim)) {}

template <class T>
MatrixT<T> Network<T>::block_forward(std::span<const T> p, const BlockSlots& b, const MatrixT<T>& x,
                                     BlockTape* tape) const {
  const int heads = cfg_.num_heads;
  const int hd = cfg_.head_dim();
  const int d = cfg_.embed_dim;
  const auto n = x.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  NormTape<T> nt1;
  MatrixT<T> a = norm_forward(p, b.norm1, x, tape ? &nt1 : nullptr);
  MatrixT<T> qkv = linear_forward(p, b.qkv, a);
  MatrixT<T> o(n, d);
  std::vector<MatrixT<T>> attn;
  if (tape) attn.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto q = qkv.middleCols(h * hd, hd);
    const auto k = qkv.middleCols(d + h * hd, hd);
    const auto v = qkv.middleCols(2 * d + h * hd, hd);
    MatrixT<T> s(n, n);
    s.noalias() = q * k.transpose();
    s *= scale;
    for (Eigen::Index r = 0; r < n; ++r) {
      const T m = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - m).exp().matrix();
      s.row(r) /= s.row(r).sum();
    }
    o.middleCols(h * hd, hd).noalias() = s * v;
    if (tape) attn.push_back(std::move(s));
  }
  MatrixT<T> x1 = x + linear_forward(p, b.proj, o);

  NormTape<T> nt2;
  MatrixT<T> c = norm_forward(p, b.norm2, x1, tape ? &nt2 : nullptr);
  MatrixT<T> hpre = linear_forward(p, b.fc1, c);
  MatrixT<T> gact = hpre.unaryExpr([](T v) { return gelu(v); });
  MatrixT<T> out = x1 + linear_forward(p, b.fc2, gact);

  if (tape) {
    tape->x = x;
    tape->norm1 = std::move(nt1);
    tape->a = std::move(a);
    tape->qkv = std::move(qkv);
    tape->attn = std::move(attn);
    tape->o = std::move(o);
    tape->x1 = std::move(x1);
    tape->norm2 = std::move(nt2);
    tape->c = std::move(c);
    tape->h = std::move(hpre);
    tape->gact = std::move(gact);
  }
  return out;
}

template <class T>
MatrixT<T> Network<T>::block_backward(std::span<const T> p, const BlockSlots& b, const BlockTape& t,
                                      const MatrixT<T>& dout, std::span<T> g) const {
  const int heads = cfg_.num_heads;
  const int hd = cfg_.head_dim();
  const int d = cfg_.embed_dim;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  // MLP branch.
  MatrixT<T> dg = linear_backward(p, b.fc2, t.gact, dout, g);
  MatrixT<T> dh = (dg.array() * t.h.unaryExpr([](T v) { return gelu_grad(v); }).array()).matrix();
  MatrixT<T> dc = linear_backward(p, b.fc1, t.c, dh, g);
  MatrixT<T> dx1 = dout + norm_backward(p, b.norm2, t.norm2, dc, g);

  // Attention branch.
  MatrixT<T> d_o = linear_backward(p, b.proj, t.o, dx1, g);
  MatrixT<T> dqkv(t.qkv.rows(), t.qkv.cols());
  for (int h = 0; h < heads; ++h) {
    const auto q = t.qkv.middleCols(h * hd, hd);
    const auto k = t.qkv.middleCols(d + h * hd, hd);
    const auto v = t.qkv.middleCols(2 * d + h * hd, hd);
    const MatrixT<T>& a = t.attn[static_cast<std::size_t>(h)];
    const auto doh = d_o.middleCols(h * hd, hd);
    MatrixT<T> da(a.rows(), a.cols());
    da.noalias() = doh * v.transpose();
    dqkv.middleCols(2 * d + h * hd, hd).noalias() = a.transpose() * doh;
    MatrixT<T> ds = a;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const T dot = da.row(r).dot(a.row(r));
      ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
    }
    ds *= scale;
    dqkv.middleCols(h * hd, hd).noalias() = ds * k;
    dqkv.middleCols(d + h * hd, hd).noalias() = ds.transpose() * q;
  }
  MatrixT<T> da_in = linear_backward(p, b.qkv, t.a, dqkv, g);
  return dx1 + norm_backward(p, b.norm1, t.norm1, da_in, g);
}

template <class T>
MatrixT<T> Network<T>::run_encoder(std::span<const T> p, const MatrixT<T>& visible_pixels,
                                   std::span<const int> visible_positions, Tape* tape) const {
  if (visible_pixels.rows() == 0) throw ArgumentError("encode: visible set is empty");
  if (visible_pixels.cols() != cfg_.patch_dim() ||
      static_cast<std::size_t>(visible_pixels.rows()) != visible_positions.size()) {
    throw ArgumentError("encode: visible patch shape mismatch");
  }
  const auto nv = visible_pixels.rows();
  MatrixT<T> z(nv + 1, cfg_.embed_dim);
  z.row(0) = cvec(p, layout_.class_token);
  z.bottomRows(nv) = linear_forward(p, layout_.patch_embed, visible_pixels);
  for (Eigen::Index i = 0; i < nv; ++i) z.row(i + 1) += enc_pos_.row(visible_positions[static_cast<std::size_t>(i)]);

  if (tape) tape->enc_blocks.resize(layout_.encoder.size());
  for (std::size_t l = 0; l < layout_.encoder.size(); ++l) {
    z = block_forward(p, layout_.encoder[l], z, tape ? &tape->enc_blocks[l] : nullptr);
  }
  MatrixT<T> out = norm_forward(p, layout_.encoder_norm, z, tape ? &tape->enc_norm : nullptr);
  if (tape) {
    tape->visible_pixels = visible_pixels;
    tape->enc_out = out;
  }
  return out;
}

template <class T>
Predictions<T> Network<T>::run_decoder(std::span<const T> p, const MatrixT<T>& emb,
                                       std::span<const int> visible_positions,
                                       std::span<const int> masked_positions, Tape* tape) const {
  if (static_cast<std::size_t>(emb.rows()) != visible_positions.size() + 1 || emb.cols() != cfg_.embed_dim) {
    throw ArgumentError("decode: embeddings do not match the visible set");
  }
  for (int m : masked_positions) {
    for (int v : visible_positions) {
      if (m == v) throw ArgumentError("decode: masked and visible sets overlap");
    }
  }
  const auto nt = emb.rows();
  const auto nm = static_cast<Eigen::Index>(masked_positions.size());
  MatrixT<T> z(nt + nm, cfg_.embed_dim);
  z.topRows(nt) = linear_forward(p, layout_.decoder_embed, emb);
  for (Eigen::Index i = 0; i + 1 < nt; ++i) z.row(i + 1) += dec_pos_.row(visible_positions[static_cast<std::size_t>(i)]);
  const auto mask_token = cvec(p, layout_.mask_token);
  for (Eigen::Index i = 0; i < nm; ++i) {
    z.row(nt + i) = mask_token + dec_pos_.row(masked_positions[static_cast<std::size_t>(i)]);
  }
  if (tape) tape->dec_blocks.resize(layout_.decoder.size());
  for (std::size_t l = 0; l < layout_.decoder.size(); ++l) {
    z = block_forward(p, layout_.decoder[l], z, tape ? &tape->dec_blocks[l] : nullptr);
  }
  MatrixT<T> zn = norm_forward(p, layout_.decoder_norm, z, tape ? &tape->dec_norm : nullptr);
  MatrixT<T> tokens = zn.bottomRows(nm);
  Predictions<T> out;
  out.pixels = linear_forward(p, layout_.pixel_head, tokens);
  out.edges = linear_forward(p, layout_.edge_head, tokens);
  if (tape) {
    tape->masked_tokens = std::move(tokens);
    tape->n_enc_tokens = nt;
  }
  return out;
}

template <class T>
MatrixT<T> Network<T>::encode(std::span<const T> params, const MatrixT<T>& visible_pixels,
                              std::span<const int> visible_positions) const {
  return run_encoder(params, visible_pixels, visible_positions, nullptr);
}

template <class T>
Predictions<T> Network<T>::decode(std::span<const T> params, const MatrixT<T>& embeddings,
                                  std::span<const int> visible_positions,
                                  std::span<const int> masked_positions) const {
  return run_decoder(params, embeddings, visible_positions, masked_positions, nullptr);
}

template <class T>
Predictions<T> Network<T>::predict(std::span<const T> params, const MaskedSample<T>& s) const {
  if (params.size() != layout_.total) throw ArgumentError("parameter vector size mismatch");
  const MatrixT<T> emb = encode(params, s.visible_pixels, s.visible_positions);
  return decode(params, emb, s.visible_positions, s.masked_positions);
}

template <class T>
LossParts Network<T>::loss_and_grad(std::span<const T> p, const MaskedSample<T>& s, double edge_weight,
                                    std::span<T> g, T scale, MatrixT<T>* target_grad) const {
  if (p.size() != layout_.total || g.size() != layout_.total) {
    throw ArgumentError("parameter/gradient vector size mismatch");
  }
  const auto nm = static_cast<Eigen::Index>(s.masked_positions.size());
  if (s.masked_pixels.rows() != nm || s.masked_edges.rows() != nm ||
      (nm > 0 && (s.masked_pixels.cols() != cfg_.patch_dim() || s.masked_edges.cols() != cfg_.patch_dim()))) {
    throw ArgumentError("loss: target shape does not match the masked set");
  }
  if (nm == 0) {
    if (target_grad) target_grad->resize(0, cfg_.patch_dim());
    return {};
  }

  Tape tape;
  const MatrixT<T> emb = run_encoder(p, s.visible_pixels, s.visible_positions, &tape);
  const Predictions<T> pred = run_decoder(p, emb, s.visible_positions, s.masked_positions, &tape);

  const MatrixT<T> pix_res = pred.pixels - s.masked_pixels;
  const MatrixT<T> edge_res = pred.edges - s.masked_edges;
  const double denom = static_cast<double>(nm) * cfg_.patch_dim();
  LossParts loss;
  loss.mse = static_cast<double>(pix_res.template cast<double>().squaredNorm()) / denom;
  loss.edge = static_cast<double>(edge_res.template cast<double>().squaredNorm()) / denom;
  loss.total = loss.mse + edge_weight * loss.edge;

  const T k = static_cast<T>(2.0 / denom) * scale;
  const MatrixT<T> dpix = pix_res * k;
  const MatrixT<T> dedge = edge_res * (k * static_cast<T>(edge_weight));

  if (target_grad) {
    // Targets enter the loss as -residual; edge targets are Sobel maps of the pixel targets.
    target_grad->resize(nm, cfg_.patch_dim());
    const int ps = cfg_.patch_size;
    for (Eigen::Index i = 0; i < nm; ++i) {
      const MatrixT<T> patch = Eigen::Map<const MatrixT<T>>(s.masked_pixels.row(i).data(), ps, ps);
      const MatrixT<T> up = Eigen::Map<const MatrixT<T>>(dedge.row(i).data(), ps, ps);
      const MatrixT<T> via_edge = sobel_backward<T>(patch, -up);
      target_grad->row(i) = -dpix.row(i) + Eigen::Map<const RowVec<T>>(via_edge.data(), ps * ps);
    }
  }

  MatrixT<T> dtok = linear_backward(p, layout_.pixel_head, tape.masked_tokens, dpix, g);
  dtok += linear_backward(p, layout_.edge_head, tape.masked_tokens, dedge, g);

  const auto nt = tape.n_enc_tokens;
  MatrixT<T> dzn = MatrixT<T>::Zero(nt + nm, cfg_.embed_dim);
  dzn.bottomRows(nm) = dtok;
  MatrixT<T> dz = norm_backward(p, layout_.decoder_norm, tape.dec_norm, dzn, g);
  for (std::size_t l = layout_.decoder.size(); l-- > 0;) {
    dz = block_backward(p, layout_.decoder[l], tape.dec_blocks[l], dz, g);
  }
  gvec(g, layout_.mask_token) += dz.bottomRows(nm).colwise().sum();
  const MatrixT<T> dy = dz.topRows(nt);
  MatrixT<T> demb = linear_backward(p, layout_.decoder_embed, tape.enc_out, dy, g);

  MatrixT<T> de = norm_backward(p, layout_.encoder_norm, tape.enc_norm, demb, g);
  for (std::size_t l = layout_.encoder.size(); l-- > 0;) {
    de = block_backward(p, layout_.encoder[l], tape.enc_blocks[l], de, g);
  }
  gvec(g, layout_.class_token) += de.row(0);
  const MatrixT<T> dpatch = de.bottomRows(nt - 1);
  linear_backward(p, layout_.patch_embed, tape.visible_pixels, dpatch, g);
  return loss;
}

template <class T>
MatrixT<T> sobel(const MatrixT<T>& in) {
  const auto h = in.rows();
  const auto w = in.cols();
  MatrixT<T> out(h, w);
  auto at = [&](Eigen::Index r, Eigen::Index c) {
    return in(std::clamp<Eigen::Index>(r, 0, h - 1), std::clamp<Eigen::Index>(c, 0, w - 1));
  };
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      const T gx = (at(r - 1, c + 1) + T(2) * at(r, c + 1) + at(r + 1, c + 1)) -
                   (at(r - 1, c - 1) + T(2) * at(r, c - 1) + at(r + 1, c - 1));
      const T gy = (at(r + 1, c - 1) + T(2) * at(r + 1, c) + at(r + 1, c + 1)) -
                   (at(r - 1, c - 1) + T(2) * at(r - 1, c) + at(r - 1, c + 1));
      out(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

template <class T>
MatrixT<T> sobel_backward(const MatrixT<T>& in, const MatrixT<T>& upstream) {
  const auto h = in.rows();
  const auto w = in.cols();
  MatrixT<T> grad = MatrixT<T>::Zero(h, w);
  auto idx = [&](Eigen::Index r, Eigen::Index c) {
    return std::pair{std::clamp<Eigen::Index>(r, 0, h - 1), std::clamp<Eigen::Index>(c, 0, w - 1)};
  };
  static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static constexpr int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      T gx = 0;
      T gy = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const auto [rr, cc] = idx(r + dr, c + dc);
          gx += T(kx[dr + 1][dc + 1]) * in(rr, cc);
          gy += T(ky[dr + 1][dc + 1]) * in(rr, cc);
        }
      }
      const T mag = std::sqrt(gx * gx + gy * gy);
      if (mag == T(0)) continue;  // subgradient 0 at the kink
      const T ux = upstream(r, c) * gx / mag;
      const T uy = upstream(r, c) * gy / mag;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const auto [rr, cc] = idx(r + dr, c + dc);
          grad(rr, cc) += ux * T(kx[dr + 1][dc + 1]) + uy * T(ky[dr + 1][dc + 1]);
        }
      }
    }
  }
  return grad;
}

template class Network<float>;
template class Network<double>;
template MatrixT<float> sincos_positions<float>(int, int, int);
template MatrixT<double> sincos_positions<double>(int, int, int);
template MatrixT<float> sobel<float>(const MatrixT<float>&);
template MatrixT<double> sobel<double>(const MatrixT<double>&);
template MatrixT<float> sobel_backward<float>(const MatrixT<float>&, const MatrixT<float>&);
template MatrixT<double> sobel_backward<double>(const MatrixT<double>&, const MatrixT<double>&);

}  // namespace u2ad
