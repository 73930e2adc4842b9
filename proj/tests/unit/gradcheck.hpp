#pragma once

#include "lsdm/nn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace test {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  double max_array_rel_error = 0.0;  // ||a - n|| / (||a|| + ||n||) per leaf
  std::size_t entries = 0;
};

// Compares analytic gradients of `loss` with central differences for every
// entry of every leaf. Relative error is |a - n| / max(|a| + |n|, floor).
inline GradCheckResult grad_check(const std::vector<lsdm::nn::Var>& leaves,
                                  const std::function<lsdm::nn::Var()>& loss, double h = 1e-6,
                                  double floor = 1e-6) {
  for (const auto& l : leaves) l.zero_grad();
  lsdm::nn::backward(loss());
  GradCheckResult r;
  for (const auto& leaf : leaves) {
    lsdm::nn::Var v = leaf;
    const lsdm::Matrix analytic =
        v.grad().size() == 0 ? lsdm::Matrix::Zero(v.rows(), v.cols()) : lsdm::Matrix(v.grad());
    lsdm::Matrix numeric_all(v.rows(), v.cols());
    for (lsdm::Index i = 0; i < v.value().size(); ++i) {
      const double orig = v.value().data()[i];
      v.mutable_value().data()[i] = orig + h;
      const double up = loss().item();
      v.mutable_value().data()[i] = orig - h;
      const double down = loss().item();
      v.mutable_value().data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data()[i];
      numeric_all.data()[i] = numeric;
      r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor));
      r.max_abs_grad = std::max(r.max_abs_grad, std::abs(a));
      ++r.entries;
    }
    const double denom = analytic.norm() + numeric_all.norm();
    if (denom > 0.0) r.max_array_rel_error = std::max(r.max_array_rel_error, (analytic - numeric_all).norm() / denom);
  }
  return r;
}

}  // namespace test
