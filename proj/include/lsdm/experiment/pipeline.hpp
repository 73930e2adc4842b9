#pragma once

#include "lsdm/common/error.hpp"
#include "lsdm/data/dataset.hpp"
#include "lsdm/data/windows.hpp"
#include "lsdm/env/contrastive.hpp"
#include "lsdm/experiment/checkpoint.hpp"
#include "lsdm/experiment/config.hpp"
#include "lsdm/forecast/forecast.hpp"
#include "lsdm/forecast/model.hpp"
#include "lsdm/metrics/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lsdm::experiment {

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// The manifest dataset, or the synthetic one described by the config.
data::Dataset load_or_generate(const RunConfig& config);

/// First row of the held-out range for a series of length m.
Index split_index(Index m, double train_fraction);

/// Statistics from the training range of every user only.
data::Normalizer fit_training_normalizer(const data::Dataset& dataset, double train_fraction);

struct WindowSplit {
  std::vector<data::SampleWindow> train;  // targets end inside the training range
  std::vector<data::SampleWindow> test;   // targets start in the held-out range
};

WindowSplit split_windows(const data::Dataset& dataset, const data::Normalizer& normalizer, const RunConfig& config);

/// (tile, templated text) for every time point of every user's training range.
std::vector<env::ContrastivePair> contrastive_pairs(const data::Dataset& dataset, double train_fraction, int top_k);

/// x0 rows (K*L, entry k*L + l) for a set of windows.
Matrix diffusion_targets(std::span<const data::SampleWindow> windows);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double epsilon_mse = 0.0;
  double x0_mse = 0.0;
  double x0_cosine = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm
};

struct TrainLog {
  std::vector<double> contrastive_loss;
  std::vector<EpochRecord> epochs;
};

nlohmann::json to_json(const TrainLog& log);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // cadence and divergence checkpoints
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainOutput {
  forecast::LsdmModel model;
  RunConfig config;  // snapshot actually used (tile shape from the dataset)
  TrainLog log;
  long steps = 0;
  std::string rng_state;
};

TrainOutput train(RunConfig config, const data::Dataset& dataset, const TrainOptions& options = {});

struct EvalOutput {
  metrics::MetricsReport metrics;         // one-step diffusion forecasts on held-out windows
  metrics::MetricsReport seasonal_naive;  // same windows, lag 24
  metrics::MetricsReport autoregressive;  // same windows, order-3 fit per window
  forecast::HorizonReport horizon;
  int test_windows = 0;
};

/// One-step metrics, baselines and the recursive horizon report. Set
/// `with_horizon` to false to skip the recursive part.
EvalOutput evaluate(const forecast::LsdmModel& model, const RunConfig& config, const data::Dataset& dataset,
                    bool with_horizon = true);

nlohmann::json baselines_json(const EvalOutput& out);

}  // namespace lsdm::experiment
