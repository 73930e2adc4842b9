#include "lsdm/env/towers.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/random.hpp"

#include <cmath>

namespace lsdm::env {

using nn::Var;

DualTower::DualTower(const TowerConfig& config, std::uint64_t seed) : config_(config) {
  if (config.embed_dim < 1 || config.hidden_multiplier < 1 || config.token_dim < 1 || config.max_positions < 1) {
    throw ValidationError("tower dimensions must be positive");
  }
  if (!(config.initial_temperature > 0.0)) throw ValidationError("temperature must be positive");
  Rng rng(derive_seed(seed, 0x70e5));
  const Index hidden = static_cast<Index>(config.hidden_multiplier) * config.embed_dim;
  const Index tile = config.tile_shape.size();
  image_in_ = nn::Linear(store_, "towers.image.in", tile, hidden, rng);
  image_out_ = nn::Linear(store_, "towers.image.out", hidden, config.embed_dim, rng);
  token_table_ = store_.add("towers.text.tokens", nn::normal_init(Vocabulary::size(), config.token_dim, 1.0, rng));
  position_gate_ = store_.add("towers.text.position_gate", Matrix::Zero(config.max_positions, config.token_dim));
  null_embedding_ = store_.add("towers.text.null", nn::normal_init(1, config.token_dim, 1.0, rng));
  text_in_ = nn::Linear(store_, "towers.text.in", config.token_dim, hidden, rng);
  text_out_ = nn::Linear(store_, "towers.text.out", hidden, config.embed_dim, rng);
  Matrix tau(1, 1);
  tau(0, 0) = std::log(1.0 / config.initial_temperature);
  log_inv_tau_ = store_.add("towers.log_inv_temperature", tau);
}

Var DualTower::encode_images(const Var& tiles) const {
  if (tiles.cols() != config_.tile_shape.size()) {
    throw ShapeError("tile has " + std::to_string(tiles.cols()) + " entries, expected " +
                     std::to_string(config_.tile_shape.size()));
  }
  return nn::l2_normalize_rows(image_out_(nn::silu(image_in_(tiles))));
}

Var DualTower::encode_texts(std::span<const TextDescription> texts) const {
  std::vector<Index> tokens;
  std::vector<Index> positions;
  std::vector<Index> offsets{0};
  for (const auto& t : texts) {
    for (std::size_t j = 0; j < t.token_ids.size(); ++j) {
      const int id = t.token_ids[j];
      if (id < 0 || id >= Vocabulary::size()) throw ValidationError("token id outside the vocabulary");
      tokens.push_back(id);
      positions.push_back(std::min<Index>(static_cast<Index>(j), config_.max_positions - 1));
    }
    offsets.push_back(static_cast<Index>(tokens.size()));
  }
  Var pooled;
  if (tokens.empty()) {
    pooled = nn::repeat_rows(null_embedding_, static_cast<Index>(texts.size()));
  } else {
    Var emb = nn::gather_rows(token_table_, tokens);
    Var gate = nn::add_scalar(nn::gather_rows(position_gate_, positions), 1.0);
    pooled = nn::segment_mean(nn::mul(emb, gate), offsets, null_embedding_);
  }
  return nn::l2_normalize_rows(text_out_(nn::silu(text_in_(pooled))));
}

RowVector DualTower::encode_image(const RowVector& tile) const {
  if (tile.size() != config_.tile_shape.size()) {
    throw ShapeError("tile has " + std::to_string(tile.size()) + " entries, expected " +
                     std::to_string(config_.tile_shape.size()));
  }
  if (!tile.allFinite()) throw ValidationError("tile contains non-finite entries");
  nn::NoGradGuard guard;
  return encode_images(nn::constant(Matrix(tile))).value().row(0);
}

RowVector DualTower::encode_text(const TextDescription& text) const {
  nn::NoGradGuard guard;
  return encode_texts(std::span<const TextDescription>(&text, 1)).value().row(0);
}

double DualTower::temperature() const { return std::exp(-log_inv_tau_.item()); }

}  // namespace lsdm::env
