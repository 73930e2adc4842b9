#include "lsdm/diffusion/schedule.hpp"

#include "lsdm/common/error.hpp"

#include <cmath>

namespace lsdm::diffusion {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps) {
    throw ValidationError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ValidationError("schedule needs at least one step");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    if (!(b > 0.0 && b < 1.0)) throw ValidationError("beta values must lie strictly inside (0, 1)");
    const double a = 1.0 - b;
    prod *= a;
    s.alpha.push_back(a);
    s.alpha_bar.push_back(prod);
    s.sigma.push_back(i == 0 ? 0.0 : std::sqrt(b));
  }
  s.beta = std::move(betas);
  s.beta_min = s.beta.front();
  s.beta_max = s.beta.back();
  return s;
}

NoiseSchedule make_schedule(const std::string& kind, int steps, double beta_min, double beta_max) {
  if (kind != "linear") throw ValidationError("unknown schedule kind '" + kind + "'");
  if (steps < 1) throw ValidationError("schedule needs at least one step");
  if (!(beta_min > 0.0)) throw ValidationError("beta_min must be strictly positive");
  if (!(beta_max < 1.0)) throw ValidationError("beta_max must be below 1");
  if (!(beta_min <= beta_max)) throw ValidationError("beta_min must not exceed beta_max");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    betas[static_cast<std::size_t>(i)] =
        steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * static_cast<double>(i) / (steps - 1);
  }
  betas.back() = steps == 1 ? beta_min : beta_max;
  NoiseSchedule s = schedule_from_betas(std::move(betas));
  s.kind = kind;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  return s;
}

Matrix forward_step(const Matrix& x_prev, int t, const Matrix& epsilon, const NoiseSchedule& schedule) {
  require_same_shape(x_prev, epsilon, "forward_step");
  const double a = schedule.alpha_at(t);
  return std::sqrt(a) * x_prev + std::sqrt(1.0 - a) * epsilon;
}

Matrix forward_jump(const Matrix& x0, int t, const Matrix& epsilon, const NoiseSchedule& schedule) {
  require_same_shape(x0, epsilon, "forward_jump");
  const double ab = schedule.alpha_bar_at(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * epsilon;
}

Matrix reverse_step(const Matrix& x_t, int t, const Matrix& eps_hat, const Matrix& z, const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps_hat, "reverse_step");
  require_same_shape(x_t, z, "reverse_step");
  const double a = schedule.alpha_at(t);
  const double ab = schedule.alpha_bar_at(t);
  if (t == 1 && !z.isZero(0.0)) throw ValidationError("reverse_step: noise must be zero at t=1");
  Matrix out = (x_t - ((1.0 - a) / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(a);
  const double sigma = schedule.sigma_at(t);
  if (sigma != 0.0) out += sigma * z;
  return out;
}

}  // namespace lsdm::diffusion
