#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/dataset.hpp"
#include "lsdm/data/windows.hpp"
#include "lsdm/forecast/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace lsdm::forecast {

/// Seed used at recursion step `step` (0-based). Step 0 uses the caller's seed,
/// so a one-step recursion equals predict_one.
std::uint64_t step_seed(std::uint64_t seed, int step);

/// One diffusion step for many (history, context) pairs at once: S samples
/// each, reduced to the entrywise median. Returns normalized medians, one row
/// per request (first window position only). Row seeds: derive_seed(seeds[i], s).
Matrix predict_normalized(const LsdmModel& model, std::span<const Matrix> histories,
                          std::span<const Context> contexts, int samples, std::span<const std::uint64_t> seeds,
                          std::vector<Matrix>* raw_samples = nullptr);

/// Next-step forecast in raw units (denormalized, clipped at zero).
RowVector predict_one(const LsdmModel& model, const data::SampleWindow& window, int samples, std::uint64_t seed);

/// Normalized one-step medians for many windows; window i uses derive_seed(seed, i).
Matrix predict_windows(const LsdmModel& model, std::span<const data::SampleWindow> windows, int samples,
                       std::uint64_t seed, std::size_t chunk = 256);

struct ForecastResult {
  Matrix trajectory;             // steps x K, raw units
  Matrix normalized;             // steps x K, the values fed back into the history
  Matrix postprocessed;          // steps x K, raw units after postprocess
  std::vector<std::uint64_t> seeds;        // per step
  std::vector<Matrix> per_step_samples;    // optional: steps entries of S x K raw samples
};

/// Clip at `floor` (zero by default), then a centered 3-point moving average
/// along the step axis; edges average the neighbours that exist.
Matrix postprocess(const Matrix& trajectory, const RowVector* floor = nullptr);

/// Normalized-space image of raw zero, per service: the floor used when
/// post-processing normalized trajectories.
RowVector normalized_floor(const data::Normalizer& normalizer);

struct RecursiveRequest {
  const data::SampleWindow* window = nullptr;
  std::vector<Context> contexts;  // per step; the last is repeated if short
  std::uint64_t seed = 0;
};

/// Recursive forecasts for several windows in lockstep.
std::vector<ForecastResult> predict_recursive_batch(const LsdmModel& model, std::span<const RecursiveRequest> requests,
                                                    int steps, int samples, bool keep_samples = false);

ForecastResult predict_recursive(const LsdmModel& model, const data::SampleWindow& window, int steps,
                                 std::vector<Context> contexts, std::uint64_t seed, int samples = 8,
                                 bool keep_samples = false);

nlohmann::json to_json(const ForecastResult& result, const std::string& user_id, long start_index);

// Reference baselines.

/// Row at lag `period` from the end of the history (the same hour one period ago).
RowVector seasonal_naive(const Matrix& history, int period);

struct ArModel {
  Matrix coefficients;  // order x K; row j multiplies lag j+1
};

/// Per-service zero-intercept least squares; falls back to a 1e-6 ridge when singular.
ArModel ar_baseline_fit(const Matrix& history, int order);
RowVector ar_baseline_predict(const ArModel& model, const Matrix& history);

// Horizon evaluation.

/// Produces normalized trajectories (steps x K) for the given windows.
using RecursiveForecaster = std::function<std::vector<Matrix>(
    std::span<const data::SampleWindow> windows, std::span<const std::vector<Context>> contexts, int steps,
    std::span<const std::uint64_t> seeds)>;

struct HorizonOptions {
  int samples = 8;
  double test_fraction_start = 0.75;  // windows start in the last quarter of each series
  bool postprocess = true;
  std::size_t chunk = 64;
};

struct HorizonReport {
  std::vector<int> steps_list;
  std::map<int, double> per_step_mse;                            // h -> MSE over steps 1..h
  std::map<int, std::vector<double>> per_service_per_step;       // h -> per-service MSE over steps 1..h
  std::vector<double> step_curve;                                // MSE at each individual step 1..max
  std::vector<std::vector<double>> step_service_curve;           // [step][service]
  int windows = 0;
};

HorizonReport evaluate_horizon(const RecursiveForecaster& forecaster, const data::Dataset& dataset,
                               const data::Normalizer& normalizer, int history_len, std::vector<int> steps_list,
                               int windows_per_user, std::uint64_t seed, const HorizonOptions& options = {});

HorizonReport evaluate_horizon(const LsdmModel& model, const data::Dataset& dataset, std::vector<int> steps_list,
                               int windows_per_user, std::uint64_t seed, const HorizonOptions& options = {});

nlohmann::json to_json(const HorizonReport& report);
/// "step,service,mse" rows for every step in steps_list and every service.
std::string horizon_csv(const HorizonReport& report);

}  // namespace lsdm::forecast
