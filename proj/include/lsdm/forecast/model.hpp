#pragma once

#include "lsdm/data/normalizer.hpp"
#include "lsdm/data/windows.hpp"
#include "lsdm/denoiser/denoiser.hpp"
#include "lsdm/diffusion/schedule.hpp"
#include "lsdm/env/embedding.hpp"
#include "lsdm/env/towers.hpp"

#include <span>

namespace lsdm::forecast {

/// Environment context for one time point.
struct Context {
  Eigen::RowVectorXi poi;
  RowVector tile;
};

/// Everything needed to turn a window into a forecast.
struct LsdmModel {
  data::Normalizer normalizer;
  env::DualTower towers;
  denoiser::Denoiser denoiser;
  diffusion::NoiseSchedule schedule;
  env::FusionWeights fusion;
  int top_k = 5;
  bool trained = false;

  LsdmModel(data::Normalizer n, env::DualTower t, denoiser::Denoiser d, diffusion::NoiseSchedule s,
            env::FusionWeights f, int k)
      : normalizer(std::move(n)), towers(std::move(t)), denoiser(std::move(d)), schedule(std::move(s)), fusion(f),
        top_k(k) {}

  [[nodiscard]] int history_len() const { return denoiser.config().history_len; }
  [[nodiscard]] int services() const { return denoiser.config().services; }

  /// Row i: flattened normalized history i followed by z_env of context i.
  [[nodiscard]] Matrix condition_inputs(std::span<const Matrix> histories, std::span<const Context> contexts) const;
  [[nodiscard]] Matrix condition_inputs(std::span<const data::SampleWindow> windows) const;
};

}  // namespace lsdm::forecast
