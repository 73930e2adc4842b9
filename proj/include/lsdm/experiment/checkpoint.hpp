#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/experiment/config.hpp"
#include "lsdm/forecast/model.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace lsdm::experiment {

inline constexpr int kCheckpointVersion = 1;

/// Persisted state: config snapshot, named float32 arrays, step counter and
/// the trainer's random-stream state.
struct Checkpoint {
  RunConfig config;
  std::map<std::string, Matrix> arrays;
  long step = 0;
  std::string rng_state;
};

/// Writes `<index>.json` and its payload `<index>.bin` next to it.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& index_path);
Checkpoint load_checkpoint(const std::filesystem::path& index_path);

/// Collects every model array: tower and denoiser parameters, normalizer
/// statistics, schedule betas.
Checkpoint make_checkpoint(const forecast::LsdmModel& model, const RunConfig& config, long step,
                           std::string rng_state);

/// Builds an untrained model skeleton for `config` (seeded from the training seed).
forecast::LsdmModel build_model(const RunConfig& config, data::Normalizer normalizer);

/// Rebuilds a trained model; every expected array must be present with its shape.
forecast::LsdmModel model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace lsdm::experiment
