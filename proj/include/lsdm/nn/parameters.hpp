#pragma once

#include "lsdm/common/random.hpp"
#include "lsdm/nn/autograd.hpp"

#include <map>
#include <string>
#include <vector>

namespace lsdm::nn {

/// Rounds every entry to the nearest float32 value.
///
/// Trainable weights are kept float32-representable so that checkpoints,
/// which store 32-bit floats, round-trip bit-exactly while arithmetic still
/// runs in double precision.
void round_to_float(Matrix& m);

struct NamedParameter {
  std::string name;
  Var var;
};

/// Ordered registry of trainable leaves. Order is registration order and
/// fixes the layout of optimizer state and checkpoint payloads.
class ParameterStore {
 public:
  Var add(const std::string& name, Matrix init);

  [[nodiscard]] const std::vector<NamedParameter>& entries() const { return entries_; }
  [[nodiscard]] const Var& get(const std::string& name) const;
  [[nodiscard]] bool contains(const std::string& name) const;
  [[nodiscard]] std::size_t scalar_count() const;

  void zero_grad() const;
  /// Copies values from `other` by name; every name must exist in both with matching shape.
  void assign_from(const ParameterStore& other);

 private:
  std::vector<NamedParameter> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Matrix uniform_init(Index rows, Index cols, Index fan_in, Rng& rng);
Matrix normal_init(Index rows, Index cols, double stddev, Rng& rng);

/// Fully connected layer: y = x W + b with W (in x out).
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
         bool zero_init = false);

  [[nodiscard]] Var operator()(const Var& x) const { return linear(x, weight_, bias_); }
  [[nodiscard]] Index in_features() const { return weight_.rows(); }
  [[nodiscard]] Index out_features() const { return weight_.cols(); }
  [[nodiscard]] const Var& weight() const { return weight_; }
  [[nodiscard]] const Var& bias() const { return bias_; }

 private:
  Var weight_;
  Var bias_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables clipping
};

/// Adaptive-moment optimizer with an externally supplied learning rate per step.
class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig config);

  /// Applies one update using accumulated gradients. Returns the pre-clip gradient norm.
  double step(double learning_rate);

  [[nodiscard]] long steps_taken() const { return t_; }

 private:
  std::vector<Var> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamConfig config_;
  long t_ = 0;
};

/// Cosine decay from `base` to zero over `total_steps`.
double cosine_lr(double base, long step, long total_steps);

}  // namespace lsdm::nn
