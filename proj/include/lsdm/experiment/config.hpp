#pragma once

#include "lsdm/data/synthetic.hpp"
#include "lsdm/denoiser/denoiser.hpp"
#include "lsdm/diffusion/process.hpp"
#include "lsdm/env/embedding.hpp"
#include "lsdm/env/towers.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lsdm::experiment {

struct DataSection {
  std::optional<std::filesystem::path> manifest;  // absolute after load; otherwise synthetic
  data::SyntheticConfig synthetic = data::SyntheticConfig::defaults();
  int history_len = 24;
  int horizon = 1;  // window length L of each diffusion sample
  double train_fraction = 0.75;
};

struct ScheduleSection {
  std::string kind = "linear";
  int steps = 50;
  double beta_min = 1e-4;
  double beta_max = 0.02;
};

struct ModelSection {
  denoiser::DenoiserConfig denoiser;  // services, window_len, history_len, env_dim are derived
  env::TowerConfig towers;
  ScheduleSection schedule;
  env::FusionWeights fusion;
  diffusion::LossWeights loss;
  int top_k = 5;
};

struct TrainingSection {
  std::uint64_t seed = 0;
  int contrastive_epochs = 10;
  int contrastive_batch_size = 32;
  double contrastive_learning_rate = 1e-3;
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double grad_clip = 1.0;
  bool joint = false;          // refresh towers with one contrastive epoch per diffusion epoch
  int checkpoint_every = 0;    // epochs; 0 disables intermediate checkpoints
};

struct EvaluationSection {
  std::vector<int> steps_list{10, 20, 30};
  int samples = 8;
  int windows_per_user = 4;
  int max_test_windows = 0;  // 0 evaluates every held-out window
  std::uint64_t seed = 0;
  bool raw_space = false;    // metrics in raw bytes instead of normalized units
};

struct RunConfig {
  DataSection data;
  ModelSection model;
  TrainingSection training;
  EvaluationSection evaluation;

  /// Fills the derived denoiser/tower fields from the data and model sections.
  void sync_derived();
  /// Range checks; throws ValidationError naming the field.
  void validate() const;
};

/// Parses with defaults and strict key checking. Relative manifest paths
/// resolve against `base_dir`.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace lsdm::experiment
