#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/common/random.hpp"
#include "lsdm/diffusion/schedule.hpp"
#include "lsdm/nn/autograd.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace lsdm::diffusion {

/// B x 1 x K x L arrays are stored as B x (K*L) matrices, entry (b, k*L + l).
struct SampleShape {
  Index batch = 1;
  Index services = 1;
  Index length = 1;

  [[nodiscard]] Index row_width() const { return services * length; }
};

/// eps_hat = f(x_t, t per row, condition).
using EpsilonFn = std::function<Matrix(const Matrix& x_t, const std::vector<int>& t, const Matrix& condition)>;
using EpsilonVarFn = std::function<nn::Var(const nn::Var& x_t, const std::vector<int>& t, const Matrix& condition)>;

struct SampleOptions {
  std::optional<Matrix> initial;  // replaces the seeded x_T draw
  bool deterministic = false;     // z = 0 at every step
  /// Per-row noise stream seeds; defaults to derive_seed(seed, row). A row's
  /// draws depend only on its own seed, so batching does not change them.
  std::vector<std::uint64_t> row_seeds;
};

/// Ancestral sampling from x_T down to x_0.
Matrix sample(const EpsilonFn& denoiser, const Matrix& condition, const NoiseSchedule& schedule,
              const SampleShape& shape, std::uint64_t seed, const SampleOptions& options = {});

struct DiffusionBatch {
  Matrix x0;         // B x (K*L)
  Matrix condition;  // B x width
  std::vector<int> t;
  Matrix epsilon;    // same shape as x0
};

/// Draws t uniformly on [1, T] and standard-normal epsilon for each row.
DiffusionBatch make_batch(Matrix x0, Matrix condition, const NoiseSchedule& schedule, Rng& rng);

struct LossWeights {
  double epsilon = 1.0;  // lambda0
  double mse = 1.0;      // lambda1
  double cosine = 0.1;   // lambda2
};

void validate(const LossWeights& w);

struct LossTerms {
  nn::Var loss;
  double epsilon_mse = 0.0;
  double x0_mse = 0.0;
  double x0_cosine = 0.0;  // only evaluated when the cosine weight is positive
};

LossTerms training_loss(const DiffusionBatch& batch, const EpsilonVarFn& denoiser, const NoiseSchedule& schedule,
                        const LossWeights& weights);

}  // namespace lsdm::diffusion
