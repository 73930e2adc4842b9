#include "lsdm/denoiser/denoiser.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/random.hpp"
#include "lsdm/denoiser/layout.hpp"

namespace lsdm::denoiser {

using nn::Var;

void DenoiserConfig::validate() const {
  if (channel_width < 1 || num_heads < 1 || blocks < 1 || condition_dim < 1 || history_dim < 1 || mlp_ratio < 1) {
    throw ValidationError("denoiser widths, heads and blocks must be positive");
  }
  if (channel_width % num_heads != 0) throw ValidationError("channel_width must be divisible by num_heads");
  if (timestep_dim < 2 || timestep_dim % 2 != 0) throw ValidationError("timestep_dim must be even");
  if (services < 1 || window_len < 1 || history_len < 1 || env_dim < 0) {
    throw ValidationError("services, window_len and history_len must be positive");
  }
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config.validate();
  Rng rng(derive_seed(seed, 0xde05));
  const Index c = config.channel_width;
  const Index hc = config.condition_dim;
  input_ = nn::Linear(store_, "denoiser.input", 1, c, rng);
  service_embedding_ = store_.add("denoiser.service_embedding", nn::normal_init(config.services, c, 0.5, rng));
  history_in_ = nn::Linear(store_, "denoiser.history.in",
                           static_cast<Index>(config.history_len) * config.services, config.history_dim, rng);
  history_out_ = nn::Linear(store_, "denoiser.history.out", config.history_dim, config.history_dim, rng);
  condition_proj_ = nn::Linear(store_, "denoiser.condition",
                               config.history_dim + config.env_dim + config.timestep_dim, hc, rng);
  for (int b = 0; b < config.blocks; ++b) {
    const std::string name = "denoiser.block" + std::to_string(b);
    Block blk;
    blk.time = TransformerLayer(store_, name + ".time", c, config.num_heads, config.mlp_ratio, hc, rng);
    blk.feature = TransformerLayer(store_, name + ".feature", c, config.num_heads, config.mlp_ratio, hc, rng);
    blocks_.push_back(std::move(blk));
  }
  final_time_ = TransformerLayer(store_, "denoiser.final.time", c, config.num_heads, config.mlp_ratio, {}, rng);
  final_feature_ =
      TransformerLayer(store_, "denoiser.final.feature", c, config.num_heads, config.mlp_ratio, {}, rng);
  final_modulation_ = nn::Linear(store_, "denoiser.final.adaln", hc, 2 * c, rng, true);
  final_out_ = nn::Linear(store_, "denoiser.final.out", c, 1, rng);
  time_positions_ = positional_table(config.window_len, config.channel_width);
}

Var Denoiser::encode_history(const Var& history) const {
  if (history.cols() != history_in_.in_features()) {
    throw ShapeError("history has " + std::to_string(history.cols()) + " entries per row, expected " +
                     std::to_string(history_in_.in_features()));
  }
  return history_out_(nn::silu(history_in_(history)));
}

Var Denoiser::assemble_condition(const Var& history_emb, const Var& z_env, const Var& t_emb) const {
  if (history_emb.cols() != config_.history_dim || z_env.cols() != config_.env_dim ||
      t_emb.cols() != config_.timestep_dim) {
    throw ShapeError("condition component widths do not match the configuration");
  }
  if (history_emb.rows() != z_env.rows() || history_emb.rows() != t_emb.rows()) {
    throw ShapeError("condition components have different batch sizes");
  }
  const Var env = config_.conditional ? z_env : nn::constant(Matrix::Zero(z_env.rows(), z_env.cols()));
  const Var parts[] = {history_emb, env, t_emb};
  return condition_proj_(nn::concat_cols(parts));
}

Var Denoiser::condition(const Matrix& condition_input, const std::vector<int>& t) const {
  if (condition_input.cols() != config_.condition_input_width()) {
    throw ShapeError("condition input has " + std::to_string(condition_input.cols()) + " columns, expected " +
                     std::to_string(config_.condition_input_width()));
  }
  if (static_cast<Index>(t.size()) != condition_input.rows()) throw ShapeError("one step index per row required");
  const Index hist = static_cast<Index>(config_.history_len) * config_.services;
  Matrix t_emb(condition_input.rows(), config_.timestep_dim);
  for (Index i = 0; i < t_emb.rows(); ++i) {
    t_emb.row(i) = timestep_embedding(t[static_cast<std::size_t>(i)], config_.timestep_dim);
  }
  return assemble_condition(encode_history(nn::constant(condition_input.leftCols(hist))),
                            nn::constant(condition_input.rightCols(config_.env_dim)),
                            nn::constant(std::move(t_emb)));
}

Index Denoiser::batch_of(const Var& tokens) const {
  const Index per = config_.sample_width();
  if (tokens.cols() != config_.channel_width || tokens.rows() % per != 0) {
    throw ShapeError("token matrix must be (B*K*L) x C_model");
  }
  return tokens.rows() / per;
}

Var Denoiser::project_input(const Var& x_t) const {
  if (x_t.cols() != config_.sample_width()) {
    throw ShapeError("x_t has " + std::to_string(x_t.cols()) + " columns, expected K*L = " +
                     std::to_string(config_.sample_width()));
  }
  const Index b = x_t.rows();
  std::vector<Index> service_of_row;
  service_of_row.reserve(static_cast<std::size_t>(b * config_.sample_width()));
  for (Index i = 0; i < b; ++i) {
    for (Index k = 0; k < config_.services; ++k) {
      for (Index l = 0; l < config_.window_len; ++l) service_of_row.push_back(k);
    }
  }
  Var scalars = nn::reshape(x_t, b * config_.sample_width(), 1);
  return nn::add(input_(scalars), nn::gather_rows(service_embedding_, service_of_row));
}

Var Denoiser::feature_pass(const TransformerLayer& layer, const Var& tokens, const Var* silu_c) const {
  const Index k = config_.services;
  const Index len = config_.window_len;
  if (len == 1) return layer(tokens, k, silu_c, k);
  const Index b = batch_of(tokens);
  const auto to_feature = time_to_feature_order(b, k, len);
  const auto to_time = feature_to_time_order(b, k, len);
  Var y = layer(nn::gather_rows(tokens, to_feature), k, silu_c, k * len);
  return nn::gather_rows(y, to_time);
}

Var Denoiser::two_axis_block(int block, const Var& tokens, const Var& c) const {
  if (block < 0 || block >= static_cast<int>(blocks_.size())) throw ValidationError("block index out of range");
  const Index b = batch_of(tokens);
  if (c.rows() != b || c.cols() != config_.condition_dim) throw ShapeError("condition must be B x H_c");
  const Var sc = nn::silu(c);
  const auto& blk = blocks_[static_cast<std::size_t>(block)];
  Var x = blk.time(tokens, config_.window_len, &sc, config_.sample_width(), &time_positions_);
  return feature_pass(blk.feature, x, &sc);
}

Var Denoiser::final_layer(const Var& tokens, const Var& c) const {
  const Index b = batch_of(tokens);
  if (c.rows() != b || c.cols() != config_.condition_dim) throw ShapeError("condition must be B x H_c");
  Var x_time = final_time_(tokens, config_.window_len, nullptr, config_.sample_width(), &time_positions_);
  Var x_feature = feature_pass(final_feature_, tokens, nullptr);
  Var x = nn::add(x_time, x_feature);
  Var mod = final_modulation_(nn::silu(c));
  const Index ch = config_.channel_width;
  x = modulate(nn::layer_norm(x), nn::slice_cols(mod, 0, ch), nn::slice_cols(mod, ch, ch), config_.sample_width());
  return nn::reshape(final_out_(x), b, config_.sample_width());
}

Var Denoiser::forward(const Var& x_t, const std::vector<int>& t, const Matrix& condition_input) const {
  if (x_t.rows() != condition_input.rows()) throw ShapeError("x_t and condition batch sizes differ");
  Var c = condition(condition_input, t);
  Var x = project_input(x_t);
  for (int b = 0; b < config_.blocks; ++b) x = two_axis_block(b, x, c);
  return final_layer(x, c);
}

Matrix Denoiser::predict(const Matrix& x_t, const std::vector<int>& t, const Matrix& condition_input) const {
  nn::NoGradGuard guard;
  return forward(nn::constant(x_t), t, condition_input).value();
}

}  // namespace lsdm::denoiser
