#pragma once

#include "lsdm/common/matrix.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace lsdm::metrics {

/// 1 - <pred, truth> / (|pred| |truth|) over all entries. Throws on an all-zero argument.
double cosine_loss(const Matrix& pred, const Matrix& truth);

/// lambda1 * MSE + lambda2 * cosine_loss; the cosine term is skipped when lambda2 is 0.
double combined_loss(const Matrix& pred, const Matrix& truth, double lambda1, double lambda2);

struct MetricsReport {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> cs;  // empty when either vector is all zero
  std::optional<double> r2;  // empty when truth is constant
  long n = 0;
  std::vector<MetricsReport> per_service;

  [[nodiscard]] std::vector<std::string> flags() const;
};

/// MSE, RMSE, MAE, cosine similarity and R^2 over the flattened pair.
MetricsReport compute_metrics(const Matrix& truth, const Matrix& pred);

/// compute_metrics per column.
std::vector<MetricsReport> per_service_metrics(const Matrix& truth, const Matrix& pred);

/// Aggregate report with per-column sub-reports attached.
MetricsReport compute_metrics_with_services(const Matrix& truth, const Matrix& pred);

/// Keys: mse, rmse, mae, cs, r2, n, flags, per_service. Undefined values are null.
nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

}  // namespace lsdm::metrics
