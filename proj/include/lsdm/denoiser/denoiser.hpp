#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/denoiser/layers.hpp"
#include "lsdm/nn/autograd.hpp"
#include "lsdm/nn/parameters.hpp"

#include <cstdint>
#include <vector>

namespace lsdm::denoiser {

struct DenoiserConfig {
  int channel_width = 32;  // C_model
  int num_heads = 4;
  int blocks = 2;
  int condition_dim = 128;  // H_c
  int timestep_dim = 128;
  int history_dim = 64;     // width of the history embedding
  int mlp_ratio = 2;
  int services = 10;        // K
  int window_len = 1;       // L
  int history_len = 24;     // rows of the history window
  int env_dim = 32;         // d_z
  bool conditional = true;  // false zero-fills the environment slot

  void validate() const;
  /// Width of the raw condition input: flattened history followed by z_env.
  [[nodiscard]] Index condition_input_width() const {
    return static_cast<Index>(history_len) * services + env_dim;
  }
  [[nodiscard]] Index sample_width() const { return static_cast<Index>(services) * window_len; }
};

/// eps_theta(x_t, t, c): input projection (plus a learned per-service
/// embedding), `blocks` time/feature transformer blocks, then the final layer.
///
/// x_t is B x (K*L) with entry (b, k*L + l). The raw condition input is
/// B x (history_len*K + env_dim): the flattened normalized history window
/// followed by z_env.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) = default;
  Denoiser& operator=(Denoiser&&) = default;

  [[nodiscard]] nn::Var forward(const nn::Var& x_t, const std::vector<int>& t, const Matrix& condition_input) const;
  /// Graph-free forward.
  [[nodiscard]] Matrix predict(const Matrix& x_t, const std::vector<int>& t, const Matrix& condition_input) const;

  /// flatten -> linear -> SiLU -> linear; `history` is B x (history_len*K).
  [[nodiscard]] nn::Var encode_history(const nn::Var& history) const;
  /// Projects [history_emb, z_env (zeros when unconditional), t_emb] to H_c.
  [[nodiscard]] nn::Var assemble_condition(const nn::Var& history_emb, const nn::Var& z_env,
                                           const nn::Var& t_emb) const;
  /// Full condition c (B x H_c) from the raw condition input and steps.
  [[nodiscard]] nn::Var condition(const Matrix& condition_input, const std::vector<int>& t) const;

  /// Tokens are (B*K*L) x C in (b, k, l) order; c is B x H_c.
  [[nodiscard]] nn::Var project_input(const nn::Var& x_t) const;
  [[nodiscard]] nn::Var two_axis_block(int block, const nn::Var& tokens, const nn::Var& c) const;
  /// Returns B x (K*L).
  [[nodiscard]] nn::Var final_layer(const nn::Var& tokens, const nn::Var& c) const;

  [[nodiscard]] const DenoiserConfig& config() const { return config_; }
  [[nodiscard]] nn::ParameterStore& parameters() { return store_; }
  [[nodiscard]] const nn::ParameterStore& parameters() const { return store_; }

 private:
  struct Block {
    TransformerLayer time;
    TransformerLayer feature;
  };

  [[nodiscard]] Index batch_of(const nn::Var& tokens) const;
  [[nodiscard]] nn::Var feature_pass(const TransformerLayer& layer, const nn::Var& tokens, const nn::Var* silu_c) const;

  DenoiserConfig config_;
  nn::ParameterStore store_;
  nn::Linear input_;
  nn::Var service_embedding_;
  nn::Linear history_in_;
  nn::Linear history_out_;
  nn::Linear condition_proj_;
  std::vector<Block> blocks_;
  TransformerLayer final_time_;
  TransformerLayer final_feature_;
  nn::Linear final_modulation_;
  nn::Linear final_out_;
  Matrix time_positions_;
};

}  // namespace lsdm::denoiser
