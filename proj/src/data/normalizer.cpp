#include "lsdm/data/normalizer.hpp"

#include "lsdm/common/error.hpp"

#include <cmath>

namespace lsdm::data {

namespace {
// Statistics are stored as float32 in checkpoints; keep them representable.
double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }
}  // namespace

Normalizer::Normalizer(std::vector<ServiceStats> stats) : stats_(std::move(stats)) {
  for (const auto& s : stats_) {
    if (!s.is_constant && !(s.std > 0.0)) throw ValidationError("normalizer std must be positive");
  }
}

Normalizer Normalizer::fit(const Dataset& dataset) {
  if (dataset.empty()) throw ValidationError("cannot fit a normalizer on an empty dataset");
  const int n = kServiceCount;
  std::vector<ServiceStats> stats(n);
  for (int s = 0; s < n; ++s) {
    double total = 0.0;
    double count = 0.0;
    double first = std::log1p(dataset.users.front().traffic.values(0, s));
    bool constant = true;
    for (const auto& u : dataset.users) {
      for (Index t = 0; t < u.traffic.values.rows(); ++t) {
        const double v = std::log1p(u.traffic.values(t, s));
        total += v;
        count += 1.0;
        constant = constant && v == first;
      }
    }
    const double mu = total / count;
    if (constant) {
      stats[s] = {as_float(first), 1.0, true};
      continue;
    }
    double sq = 0.0;
    for (const auto& u : dataset.users) {
      for (Index t = 0; t < u.traffic.values.rows(); ++t) {
        const double d = std::log1p(u.traffic.values(t, s)) - mu;
        sq += d * d;
      }
    }
    const double sd = std::sqrt(sq / count);
    if (!(as_float(sd) > 0.0)) {
      stats[s] = {as_float(mu), 1.0, true};
    } else {
      stats[s] = {as_float(mu), as_float(sd), false};
    }
  }
  return Normalizer(std::move(stats));
}

Matrix Normalizer::apply(const Matrix& raw) const {
  if (raw.cols() != services()) throw ShapeError("normalizer expects " + std::to_string(services()) + " columns");
  Matrix out(raw.rows(), raw.cols());
  for (Index t = 0; t < raw.rows(); ++t) {
    for (Index s = 0; s < raw.cols(); ++s) {
      const double v = raw(t, s);
      if (!std::isfinite(v)) throw ValidationError("normalizer input is not finite");
      if (v < 0.0) throw ValidationError("normalizer input must be non-negative");
      const auto& st = stats_[s];
      out(t, s) = st.is_constant ? 0.0 : (std::log1p(v) - st.mean) / st.std;
    }
  }
  return out;
}

Matrix Normalizer::invert(const Matrix& normalized) const {
  if (normalized.cols() != services()) throw ShapeError("normalizer expects " + std::to_string(services()) + " columns");
  Matrix out(normalized.rows(), normalized.cols());
  for (Index t = 0; t < normalized.rows(); ++t) {
    for (Index s = 0; s < normalized.cols(); ++s) {
      const double v = normalized(t, s);
      if (!std::isfinite(v)) throw ValidationError("normalizer input is not finite");
      const auto& st = stats_[s];
      const double logv = st.is_constant ? st.mean : v * st.std + st.mean;
      out(t, s) = std::max(0.0, std::expm1(logv));
    }
  }
  return out;
}

}  // namespace lsdm::data
