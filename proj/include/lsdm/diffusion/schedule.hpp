#pragma once

#include "lsdm/common/matrix.hpp"

#include <string>
#include <vector>

namespace lsdm::diffusion {

/// Step tables indexed by t - 1 for t in [1, T].
struct NoiseSchedule {
  std::string kind = "linear";
  int steps = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // reverse-step noise scale; sigma_1 = 0

  [[nodiscard]] double beta_at(int t) const { return beta[index(t)]; }
  [[nodiscard]] double alpha_at(int t) const { return alpha[index(t)]; }
  [[nodiscard]] double alpha_bar_at(int t) const { return alpha_bar[index(t)]; }
  [[nodiscard]] double sigma_at(int t) const { return sigma[index(t)]; }

  /// Throws ValidationError unless 1 <= t <= steps.
  [[nodiscard]] std::size_t index(int t) const;
};

/// Only "linear" is supported: beta interpolated from beta_min to beta_max inclusive.
NoiseSchedule make_schedule(const std::string& kind, int steps, double beta_min, double beta_max);

/// Builds the derived tables from explicit betas (each in (0, 1)).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// x_t = sqrt(alpha_t) x_{t-1} + sqrt(1 - alpha_t) eps
Matrix forward_step(const Matrix& x_prev, int t, const Matrix& epsilon, const NoiseSchedule& schedule);

/// x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps
Matrix forward_jump(const Matrix& x0, int t, const Matrix& epsilon, const NoiseSchedule& schedule);

/// x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t) + sigma_t z
Matrix reverse_step(const Matrix& x_t, int t, const Matrix& eps_hat, const Matrix& z, const NoiseSchedule& schedule);

}  // namespace lsdm::diffusion
