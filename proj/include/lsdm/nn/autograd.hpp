#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every differentiable quantity in the library (towers, denoiser,
// losses) is expressed with these ops so one gradient path serves training
// and finite-difference verification alike.

#include "lsdm/common/matrix.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace lsdm::nn {

using lsdm::Index;
using lsdm::Matrix;

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

/// Handle to a node in the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  [[nodiscard]] const Matrix& value() const { return node_->value; }
  [[nodiscard]] Matrix& mutable_value() { return node_->value; }
  [[nodiscard]] const Matrix& grad() const { return node_->grad; }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
  [[nodiscard]] Index rows() const { return node_->value.rows(); }
  [[nodiscard]] Index cols() const { return node_->value.cols(); }
  [[nodiscard]] double item() const;
  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

  /// Clears the accumulated gradient (leaf parameters between steps).
  void zero_grad() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

[[nodiscard]] bool grad_enabled();

Var constant(Matrix value);
Var scalar(double value);

/// Back-propagates from a 1x1 result into every reachable leaf.
void backward(const Var& loss);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var matmul_bt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
/// Row-major reshape; rows * cols must equal the input's size.
Var reshape(const Var& a, Index rows, Index cols);
/// x * weight + bias, bias broadcast over rows.
Var linear(const Var& x, const Var& weight, const Var& bias);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var add_row(const Var& a, const Var& row);  // row broadcast over a's rows
Var mul_by_scalar(const Var& a, const Var& s);  // s is 1x1
Var exp(const Var& a);
Var square(const Var& a);
Var silu(const Var& a);
Var gelu(const Var& a);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);

// Structural.
Var layer_norm(const Var& a, double eps = 1e-6);
Var l2_normalize_rows(const Var& a);
Var repeat_rows(const Var& a, Index repeats);  // each row repeated consecutively
Var gather_rows(const Var& a, std::span<const Index> rows);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
/// Mean of rows in [offsets[s], offsets[s+1]); empty segments take `fallback` (1 x C).
Var segment_mean(const Var& a, std::span<const Index> offsets, const Var& fallback);

/// Multi-head self-attention over contiguous row groups of length group_len.
/// q, k, v are N x C with N divisible by group_len and C by heads.
Var grouped_attention(const Var& q, const Var& k, const Var& v, Index group_len, Index heads);

// Losses.
Var mse(const Var& pred, const Var& truth);
/// 1 - <a,b>/(|a||b|) over all entries.
Var cosine_loss(const Var& pred, const Var& truth);
/// Mean over rows of -log softmax(row)[row index]; logits must be square.
Var cross_entropy_diag(const Var& logits);

}  // namespace lsdm::nn
