#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/dataset.hpp"
#include "lsdm/env/text.hpp"
#include "lsdm/nn/autograd.hpp"
#include "lsdm/nn/parameters.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lsdm::env {

struct TowerConfig {
  int embed_dim = 32;          // d_z
  int hidden_multiplier = 4;   // hidden width = multiplier * d_z
  int token_dim = 32;
  int max_positions = 64;
  double initial_temperature = 0.07;
  data::TileShape tile_shape;
};

/// Image and text encoders mapping into a shared unit-norm space, plus the
/// learnable temperature (stored as log(1/tau)).
///
/// Image tower: flattened tile -> linear -> SiLU -> linear.
/// Text tower: token embeddings gated by a learned per-position vector,
/// mean-pooled (a learned null vector stands in for empty sequences), then
/// linear -> SiLU -> linear.
class DualTower {
 public:
  DualTower(const TowerConfig& config, std::uint64_t seed);
  DualTower(const DualTower&) = delete;
  DualTower& operator=(const DualTower&) = delete;
  DualTower(DualTower&&) = default;
  DualTower& operator=(DualTower&&) = default;

  /// Rows of `tiles` are flattened tiles; returns unit-norm rows.
  [[nodiscard]] nn::Var encode_images(const nn::Var& tiles) const;
  [[nodiscard]] nn::Var encode_texts(std::span<const TextDescription> texts) const;

  /// Single-input conveniences with input validation; no graph is recorded.
  [[nodiscard]] RowVector encode_image(const RowVector& tile) const;
  [[nodiscard]] RowVector encode_text(const TextDescription& text) const;

  [[nodiscard]] const nn::Var& log_inv_temperature() const { return log_inv_tau_; }
  [[nodiscard]] double temperature() const;

  [[nodiscard]] const TowerConfig& config() const { return config_; }
  [[nodiscard]] nn::ParameterStore& parameters() { return store_; }
  [[nodiscard]] const nn::ParameterStore& parameters() const { return store_; }

 private:
  TowerConfig config_;
  nn::ParameterStore store_;
  nn::Linear image_in_;
  nn::Linear image_out_;
  nn::Var token_table_;
  nn::Var position_gate_;
  nn::Var null_embedding_;
  nn::Linear text_in_;
  nn::Linear text_out_;
  nn::Var log_inv_tau_;
};

}  // namespace lsdm::env
