#include "lsdm/denoiser/layers.hpp"

#include "lsdm/common/error.hpp"

#include <cmath>

namespace lsdm::denoiser {

using nn::Var;

RowVector timestep_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ValidationError("timestep embedding width must be even and positive");
  if (t < 0.0) throw ValidationError("timestep must be non-negative");
  RowVector e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    e(2 * i) = std::sin(t * freq);
    e(2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

Matrix positional_table(Index length, int dim) {
  Matrix p(length, dim);
  for (Index l = 0; l < length; ++l) p.row(l) = timestep_embedding(static_cast<double>(l), dim);
  return p;
}

Var modulate(const Var& normed, const Var& shift, const Var& scale, Index tokens_per_sample) {
  Var s = nn::repeat_rows(nn::add_scalar(scale, 1.0), tokens_per_sample);
  return nn::add(nn::mul(normed, s), nn::repeat_rows(shift, tokens_per_sample));
}

TransformerLayer::TransformerLayer(nn::ParameterStore& store, const std::string& name, Index channels, Index heads,
                                   Index mlp_ratio, std::optional<Index> condition_dim, Rng& rng)
    : channels_(channels), heads_(heads), modulated_(condition_dim.has_value()) {
  if (channels % heads != 0) throw ValidationError("channel width must be divisible by the head count");
  qkv_ = nn::Linear(store, name + ".qkv", channels, 3 * channels, rng);
  out_ = nn::Linear(store, name + ".attn_out", channels, channels, rng);
  mlp_in_ = nn::Linear(store, name + ".mlp_in", channels, mlp_ratio * channels, rng);
  mlp_out_ = nn::Linear(store, name + ".mlp_out", mlp_ratio * channels, channels, rng);
  if (modulated_) modulation_ = nn::Linear(store, name + ".adaln", *condition_dim, 4 * channels, rng, true);
}

Var TransformerLayer::operator()(const Var& tokens, Index group_len, const Var* silu_c, Index tokens_per_sample,
                                 const Matrix* positions) const {
  if (tokens.cols() != channels_) throw ShapeError("transformer layer: token width mismatch");
  if (modulated_ && silu_c == nullptr) throw ValidationError("modulated layer requires a condition");
  Var h = nn::layer_norm(tokens);
  Var mod;
  if (modulated_) {
    mod = modulation_(*silu_c);
    if (mod.rows() * tokens_per_sample != tokens.rows()) throw ShapeError("transformer layer: condition batch mismatch");
    h = modulate(h, nn::slice_cols(mod, 0, channels_), nn::slice_cols(mod, channels_, channels_), tokens_per_sample);
  }
  if (positions != nullptr) {
    if (positions->rows() != group_len || positions->cols() != channels_) {
      throw ShapeError("positional table must be group_len x channels");
    }
    Matrix tiled = positions->replicate(tokens.rows() / group_len, 1);
    h = nn::add(h, nn::constant(std::move(tiled)));
  }
  Var qkv = qkv_(h);
  Var attn = nn::grouped_attention(nn::slice_cols(qkv, 0, channels_), nn::slice_cols(qkv, channels_, channels_),
                                   nn::slice_cols(qkv, 2 * channels_, channels_), group_len, heads_);
  Var x = nn::add(tokens, out_(attn));

  Var h2 = nn::layer_norm(x);
  if (modulated_) {
    h2 = modulate(h2, nn::slice_cols(mod, 2 * channels_, channels_), nn::slice_cols(mod, 3 * channels_, channels_),
                  tokens_per_sample);
  }
  return nn::add(x, mlp_out_(nn::gelu(mlp_in_(h2))));
}

}  // namespace lsdm::denoiser
