#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/dataset.hpp"

#include <vector>

namespace lsdm::data {

struct ServiceStats {
  double mean = 0.0;  // of log1p(values)
  double std = 1.0;   // unused when is_constant
  bool is_constant = false;
};

/// Per-service standardization in log1p space.
///
/// Constant services map to zero in normalized space and invert back to
/// their constant value.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(std::vector<ServiceStats> stats);

  /// Fits statistics over every user and time point of the dataset.
  static Normalizer fit(const Dataset& dataset);

  /// standardize(log1p(raw)); raw must be finite and >= 0. Columns map to services.
  [[nodiscard]] Matrix apply(const Matrix& raw) const;
  /// expm1(destandardize(normalized)) clipped at zero.
  [[nodiscard]] Matrix invert(const Matrix& normalized) const;

  [[nodiscard]] const std::vector<ServiceStats>& stats() const { return stats_; }
  [[nodiscard]] int services() const { return static_cast<int>(stats_.size()); }

 private:
  std::vector<ServiceStats> stats_;
};

}  // namespace lsdm::data
