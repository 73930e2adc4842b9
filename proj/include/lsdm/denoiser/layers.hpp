#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/nn/autograd.hpp"
#include "lsdm/nn/parameters.hpp"

#include <optional>
#include <string>

namespace lsdm::denoiser {

/// Sinusoidal embedding: entry 2i = sin(t / 10000^(2i/dim)), 2i+1 = cos(...).
RowVector timestep_embedding(double t, int dim);

/// Per-position table (length x dim) of the same sinusoidal form.
Matrix positional_table(Index length, int dim);

/// Pre-norm transformer layer over contiguous token groups: multi-head
/// self-attention and a GELU MLP, each with a residual. When `modulated`,
/// the normalized inputs of both sub-layers are scaled by (1 + scale) and
/// shifted by values produced from SiLU(c) through a zero-initialized linear.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(nn::ParameterStore& store, const std::string& name, Index channels, Index heads, Index mlp_ratio,
                   std::optional<Index> condition_dim, Rng& rng);

  /// `tokens` rows are grouped by `group_len`; consecutive `tokens_per_sample`
  /// rows belong to one batch element (the row of `silu_c`). `positions`, if
  /// given, is added to the attention input (group_len x C, tiled).
  [[nodiscard]] nn::Var operator()(const nn::Var& tokens, Index group_len, const nn::Var* silu_c,
                                   Index tokens_per_sample, const Matrix* positions = nullptr) const;

  [[nodiscard]] const nn::Linear& qkv() const { return qkv_; }
  [[nodiscard]] const nn::Linear& out() const { return out_; }
  [[nodiscard]] const nn::Linear& mlp_in() const { return mlp_in_; }
  [[nodiscard]] const nn::Linear& mlp_out() const { return mlp_out_; }
  [[nodiscard]] bool modulated() const { return modulated_; }
  [[nodiscard]] Index heads() const { return heads_; }

 private:
  Index channels_ = 0;
  Index heads_ = 1;
  bool modulated_ = false;
  nn::Linear qkv_;
  nn::Linear out_;
  nn::Linear mlp_in_;
  nn::Linear mlp_out_;
  nn::Linear modulation_;  // c -> [shift1, scale1, shift2, scale2]
};

/// LN(x) * (1 + scale) + shift with per-sample shift/scale broadcast over its tokens.
nn::Var modulate(const nn::Var& normed, const nn::Var& shift, const nn::Var& scale, Index tokens_per_sample);

}  // namespace lsdm::denoiser
