#include "lsdm/metrics/metrics.hpp"

#include "lsdm/common/error.hpp"

#include <cmath>

namespace lsdm::metrics {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shapes differ");
}

}  // namespace

double cosine_loss(const Matrix& pred, const Matrix& truth) {
  require_same_shape(pred, truth, "cosine_loss");
  const double np = pred.norm();
  const double nt = truth.norm();
  if (np == 0.0 || nt == 0.0) throw ValidationError("cosine_loss: all-zero input has no direction");
  return 1.0 - pred.cwiseProduct(truth).sum() / (np * nt);
}

double combined_loss(const Matrix& pred, const Matrix& truth, double lambda1, double lambda2) {
  require_same_shape(pred, truth, "combined_loss");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ValidationError("loss weights must be non-negative");
  if (pred.size() == 0) throw ShapeError("combined_loss: empty input");
  double loss = lambda1 * (pred - truth).squaredNorm() / static_cast<double>(pred.size());
  if (lambda2 > 0.0) loss += lambda2 * cosine_loss(pred, truth);
  return loss;
}

std::vector<std::string> MetricsReport::flags() const {
  std::vector<std::string> f;
  if (!cs) f.emplace_back("cs_undefined");
  if (!r2) f.emplace_back("r2_undefined");
  return f;
}

MetricsReport compute_metrics(const Matrix& truth, const Matrix& pred) {
  require_same_shape(truth, pred, "compute_metrics");
  if (truth.size() == 0) throw ValidationError("compute_metrics: need at least one sample");
  if (!truth.allFinite() || !pred.allFinite()) throw ValidationError("compute_metrics: non-finite input");
  const auto y = truth.reshaped<Eigen::RowMajor>();
  const auto yh = pred.reshaped<Eigen::RowMajor>();
  const double n = static_cast<double>(truth.size());
  MetricsReport r;
  r.n = static_cast<long>(truth.size());
  const auto diff = (y - yh).eval();
  r.mse = diff.squaredNorm() / n;
  r.rmse = std::sqrt(r.mse);
  r.mae = diff.cwiseAbs().sum() / n;
  const double ny = y.norm();
  const double nyh = yh.norm();
  if (ny > 0.0 && nyh > 0.0) r.cs = y.dot(yh) / (ny * nyh);
  const double mean = y.sum() / n;
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot > 0.0) r.r2 = 1.0 - diff.squaredNorm() / ss_tot;
  return r;
}

std::vector<MetricsReport> per_service_metrics(const Matrix& truth, const Matrix& pred) {
  require_same_shape(truth, pred, "per_service_metrics");
  std::vector<MetricsReport> out;
  out.reserve(static_cast<std::size_t>(truth.cols()));
  for (Index k = 0; k < truth.cols(); ++k) out.push_back(compute_metrics(truth.col(k), pred.col(k)));
  return out;
}

MetricsReport compute_metrics_with_services(const Matrix& truth, const Matrix& pred) {
  MetricsReport r = compute_metrics(truth, pred);
  r.per_service = per_service_metrics(truth, pred);
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["mse"] = r.mse;
  j["rmse"] = r.rmse;
  j["mae"] = r.mae;
  j["cs"] = r.cs ? nlohmann::json(*r.cs) : nlohmann::json(nullptr);
  j["r2"] = r.r2 ? nlohmann::json(*r.r2) : nlohmann::json(nullptr);
  j["n"] = r.n;
  j["flags"] = r.flags();
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& s : r.per_service) ps.push_back(to_json(s));
  j["per_service"] = std::move(ps);
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.mse = j.at("mse").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.mae = j.at("mae").get<double>();
    if (!j.at("cs").is_null()) r.cs = j.at("cs").get<double>();
    if (!j.at("r2").is_null()) r.r2 = j.at("r2").get<double>();
    r.n = j.at("n").get<long>();
    for (const auto& s : j.at("per_service")) r.per_service.push_back(metrics_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

}  // namespace lsdm::metrics
