#include "lsdm/nn/autograd.hpp"

#include "lsdm/common/error.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

namespace lsdm::nn {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

std::string shape_of(const Var& v) {
  return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
  }
}

/// Creates a result node; graph edges are recorded only when needed.
Var make_node(Matrix value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(node));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (auto& p : parents) node->parents.push_back(p.node());
  node->backward_fn = std::move(fn);
  return Var(std::move(node));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  require(rows() == 1 && cols() == 1, "item() requires a 1x1 value");
  return node_->value(0, 0);
}

void Var::zero_grad() const {
  if (node_) node_->grad.resize(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) { return Var(std::move(value), false); }

Var scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

void backward(const Var& loss) {
  require(loss.rows() == 1 && loss.cols() == 1, "backward() requires a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward_fn) n->grad.resize(0, 0);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_of(a) + " * " + shape_of(b));
  Matrix out = a.value() * b.value();
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_bt: " + shape_of(a) + " * " + shape_of(b) + "^T");
  Matrix out = a.value() * b.value().transpose();
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value);
    if (pb.requires_grad) pb.accumulate(self.grad.transpose() * pa.value);
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return make_node(std::move(out), {a}, [](Node& self) {
    parent(self, 0).accumulate(self.grad.transpose());
  });
}

Var reshape(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: " + shape_of(a) + " cannot become " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Index r0 = a.rows();
  const Index c0 = a.cols();
  return make_node(std::move(out), {a}, [r0, c0](Node& self) {
    parent(self, 0).accumulate(Eigen::Map<const Matrix>(self.grad.data(), r0, c0));
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw ShapeError("linear: x " + shape_of(x) + ", weight " + shape_of(weight) + ", bias " +
                     shape_of(bias));
  }
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_node(std::move(out), {x, weight, bias}, [](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    Node& pb = parent(self, 2);
    if (px.requires_grad) px.accumulate(self.grad * pw.value.transpose());
    if (pw.requires_grad) pw.accumulate(px.value.transpose() * self.grad);
    if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return make_node(std::move(out), {a, b}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return make_node(std::move(out), {a, b}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Var scale(const Var& a, double factor) {
  Matrix out = a.value() * factor;
  return make_node(std::move(out), {a}, [factor](Node& self) {
    parent(self, 0).accumulate(self.grad * factor);
  });
}

Var add_scalar(const Var& a, double offset) {
  Matrix out = a.value().array() + offset;
  return make_node(std::move(out), {a}, [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_of(a) + " + " + shape_of(row));
  }
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make_node(std::move(out), {a, row}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) parent(self, 1).accumulate(self.grad.colwise().sum());
  });
}

Var mul_by_scalar(const Var& a, const Var& s) {
  require(s.rows() == 1 && s.cols() == 1, "mul_by_scalar: scale must be 1x1");
  Matrix out = a.value() * s.value()(0, 0);
  return make_node(std::move(out), {a, s}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& ps = parent(self, 1);
    const double sv = ps.value(0, 0);
    if (pa.requires_grad) pa.accumulate(self.grad * sv);
    if (ps.requires_grad) {
      Matrix g(1, 1);
      g(0, 0) = self.grad.cwiseProduct(pa.value).sum();
      ps.accumulate(g);
    }
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return make_node(std::move(out), {a}, [](Node& self) {
    parent(self, 0).accumulate(self.grad.cwiseProduct(self.value));
  });
}

Var square(const Var& a) {
  Matrix out = a.value().array().square();
  return make_node(std::move(out), {a}, [](Node& self) {
    parent(self, 0).accumulate(2.0 * self.grad.cwiseProduct(parent(self, 0).value));
  });
}

Var silu(const Var& a) {
  const auto x = a.value().array();
  Matrix sig = (1.0 + (-x).exp()).inverse().matrix();
  Matrix out = (x * sig.array()).matrix();
  return make_node(std::move(out), {a}, [sig = std::move(sig)](Node& self) {
    const auto x = parent(self, 0).value.array();
    const auto s = sig.array();
    Matrix d = (s * (1.0 + x * (1.0 - s))).matrix();
    parent(self, 0).accumulate(self.grad.cwiseProduct(d));
  });
}

Var gelu(const Var& a) {
  static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double c = 0.044715;
  const auto x = a.value().array();
  // tanh(u) = 1 - 2 / (exp(2u) + 1); the exp form vectorizes, tanh does not.
  Matrix th = (1.0 - 2.0 / ((2.0 * k * (x + c * x.cube())).exp() + 1.0)).matrix();
  Matrix out = (0.5 * x * (1.0 + th.array())).matrix();
  return make_node(std::move(out), {a}, [th = std::move(th)](Node& self) {
    const auto x = parent(self, 0).value.array();
    const auto t = th.array();
    Matrix d = (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * k * (1.0 + 3.0 * c * x.square()))
                   .matrix();
    parent(self, 0).accumulate(self.grad.cwiseProduct(d));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_node(std::move(out), {a}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var layer_norm(const Var& a, double eps) {
  const Index n = a.rows();
  const Index c = a.cols();
  Matrix y(n, c);
  Eigen::VectorXd inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const auto row = a.value().row(i);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    y.row(i) = (row.array() - mu) * inv_std(i);
  }
  Matrix out = y;
  return make_node(std::move(out), {a}, [y = std::move(y), inv_std = std::move(inv_std)](Node& self) {
    const Index n = y.rows();
    Matrix dx(n, y.cols());
    for (Index i = 0; i < n; ++i) {
      const auto dy = self.grad.row(i).array();
      const double mean_dy = dy.mean();
      const double mean_dy_y = (dy * y.row(i).array()).mean();
      dx.row(i) = inv_std(i) * (dy - mean_dy - y.row(i).array() * mean_dy_y);
    }
    parent(self, 0).accumulate(dx);
  });
}

Var l2_normalize_rows(const Var& a) {
  const Index n = a.rows();
  Eigen::VectorXd norms(n);
  Matrix y(n, a.cols());
  for (Index i = 0; i < n; ++i) {
    norms(i) = std::max(a.value().row(i).norm(), 1e-12);
    y.row(i) = a.value().row(i) / norms(i);
  }
  Matrix out = y;
  return make_node(std::move(out), {a}, [y = std::move(y), norms = std::move(norms)](Node& self) {
    Matrix dx(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      const double proj = y.row(i).dot(self.grad.row(i));
      dx.row(i) = (self.grad.row(i) - proj * y.row(i)) / norms(i);
    }
    parent(self, 0).accumulate(dx);
  });
}

Var repeat_rows(const Var& a, Index repeats) {
  require(repeats >= 1, "repeat_rows: repeats must be positive");
  Matrix out(a.rows() * repeats, a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    out.middleRows(i * repeats, repeats).rowwise() = a.value().row(i);
  }
  return make_node(std::move(out), {a}, [repeats](Node& self) {
    Node& p = parent(self, 0);
    Matrix g(p.value.rows(), p.value.cols());
    for (Index i = 0; i < g.rows(); ++i) {
      g.row(i) = self.grad.middleRows(i * repeats, repeats).colwise().sum();
    }
    p.accumulate(g);
  });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return make_node(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Node& p = parent(self, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    p.accumulate(g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index n = parts.front().rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ShapeError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<Index> widths;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    widths.push_back(p.cols());
    off += p.cols();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_node(std::move(out), std::move(parents), [widths = std::move(widths)](Node& self) {
    Index o = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      Node& p = parent(self, i);
      if (p.requires_grad) p.accumulate(self.grad.middleCols(o, widths[i]));
      o += widths[i];
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range out of bounds");
  Matrix out = a.value().middleCols(start, count);
  return make_node(std::move(out), {a}, [start, count](Node& self) {
    Node& p = parent(self, 0);
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var segment_mean(const Var& a, std::span<const Index> offsets, const Var& fallback) {
  require(offsets.size() >= 1, "segment_mean: offsets must hold at least one entry");
  require(fallback.rows() == 1 && fallback.cols() == a.cols(), "segment_mean: fallback shape");
  const auto segments = static_cast<Index>(offsets.size() - 1);
  Matrix out(segments, a.cols());
  for (Index s = 0; s < segments; ++s) {
    const Index begin = offsets[s];
    const Index end = offsets[s + 1];
    require(begin <= end && end <= a.rows(), "segment_mean: bad offsets");
    if (begin == end) {
      out.row(s) = fallback.value().row(0);
    } else {
      out.row(s) = a.value().middleRows(begin, end - begin).colwise().mean();
    }
  }
  std::vector<Index> off(offsets.begin(), offsets.end());
  return make_node(std::move(out), {a, fallback}, [off = std::move(off)](Node& self) {
    Node& pa = parent(self, 0);
    Node& pf = parent(self, 1);
    Matrix ga = Matrix::Zero(pa.value.rows(), pa.value.cols());
    Matrix gf = Matrix::Zero(1, pf.value.cols());
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      const Index begin = off[s];
      const Index len = off[s + 1] - begin;
      const auto g = self.grad.row(static_cast<Index>(s));
      if (len == 0) {
        gf += g;
      } else {
        ga.middleRows(begin, len).rowwise() = g / static_cast<double>(len);
      }
    }
    if (pa.requires_grad) pa.accumulate(ga);
    if (pf.requires_grad) pf.accumulate(gf);
  });
}

Var grouped_attention(const Var& q, const Var& k, const Var& v, Index group_len, Index heads) {
  require_same_shape(q, k, "grouped_attention");
  require_same_shape(q, v, "grouped_attention");
  const Index n = q.rows();
  const Index c = q.cols();
  if (group_len < 1 || n % group_len != 0) throw ShapeError("grouped_attention: rows not divisible by group length");
  if (heads < 1 || c % heads != 0) throw ShapeError("grouped_attention: channels not divisible by heads");

  // A single-position softmax is exactly 1, so attention is the value path.
  if (group_len == 1) {
    Matrix out = v.value();
    return make_node(std::move(out), {q, k, v}, [](Node& self) {
      parent(self, 2).accumulate(self.grad);
    });
  }

  const Index d = c / heads;
  const Index groups = n / group_len;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  // Attention weights per (group, head), stacked: (groups*heads*group_len) x group_len.
  Matrix probs(groups * heads * group_len, group_len);
  Matrix out(n, c);
  for (Index g = 0; g < groups; ++g) {
    for (Index h = 0; h < heads; ++h) {
      const auto qb = q.value().block(g * group_len, h * d, group_len, d);
      const auto kb = k.value().block(g * group_len, h * d, group_len, d);
      const auto vb = v.value().block(g * group_len, h * d, group_len, d);
      auto p = probs.middleRows((g * heads + h) * group_len, group_len);
      p.noalias() = (qb * kb.transpose()) * inv_sqrt_d;
      for (Index i = 0; i < group_len; ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      out.block(g * group_len, h * d, group_len, d).noalias() = p * vb;
    }
  }
  return make_node(std::move(out), {q, k, v},
                   [probs = std::move(probs), group_len, heads, d, groups, inv_sqrt_d](Node& self) {
    Node& pq = parent(self, 0);
    Node& pk = parent(self, 1);
    Node& pv = parent(self, 2);
    const Index n = pq.value.rows();
    const Index c = pq.value.cols();
    Matrix dq(n, c);
    Matrix dk(n, c);
    Matrix dv(n, c);
    Matrix dp(group_len, group_len);
    for (Index g = 0; g < groups; ++g) {
      for (Index h = 0; h < heads; ++h) {
        const Index r = g * group_len;
        const auto qb = pq.value.block(r, h * d, group_len, d);
        const auto kb = pk.value.block(r, h * d, group_len, d);
        const auto vb = pv.value.block(r, h * d, group_len, d);
        const auto go = self.grad.block(r, h * d, group_len, d);
        const auto p = probs.middleRows((g * heads + h) * group_len, group_len);
        dv.block(r, h * d, group_len, d).noalias() = p.transpose() * go;
        dp.noalias() = go * vb.transpose();
        for (Index i = 0; i < group_len; ++i) {
          const double dot = dp.row(i).dot(p.row(i));
          dp.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
        }
        dq.block(r, h * d, group_len, d).noalias() = (dp * kb) * inv_sqrt_d;
        dk.block(r, h * d, group_len, d).noalias() = (dp.transpose() * qb) * inv_sqrt_d;
      }
    }
    if (pq.requires_grad) pq.accumulate(dq);
    if (pk.requires_grad) pk.accumulate(dk);
    if (pv.requires_grad) pv.accumulate(dv);
  });
}

Var mse(const Var& pred, const Var& truth) {
  require_same_shape(pred, truth, "mse");
  return mean(square(sub(pred, truth)));
}

Var cosine_loss(const Var& pred, const Var& truth) {
  require_same_shape(pred, truth, "cosine_loss");
  const double np = pred.value().norm();
  const double nt = truth.value().norm();
  if (np == 0.0 || nt == 0.0) throw ValidationError("cosine_loss: all-zero input has no direction");
  const double dot = pred.value().cwiseProduct(truth.value()).sum();
  Matrix out(1, 1);
  out(0, 0) = 1.0 - dot / (np * nt);
  return make_node(std::move(out), {pred, truth}, [np, nt, dot](Node& self) {
    Node& pp = parent(self, 0);
    Node& pt = parent(self, 1);
    const double g = self.grad(0, 0);
    const double cs = dot / (np * nt);
    // d(cs)/dp = t/(|p||t|) - cs * p/|p|^2
    if (pp.requires_grad) pp.accumulate(-g * (pt.value / (np * nt) - cs * pp.value / (np * np)));
    if (pt.requires_grad) pt.accumulate(-g * (pp.value / (np * nt) - cs * pt.value / (nt * nt)));
  });
}

Var cross_entropy_diag(const Var& logits) {
  const Index n = logits.rows();
  if (n != logits.cols() || n == 0) throw ShapeError("cross_entropy_diag: logits must be square and non-empty");
  Matrix soft(n, n);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto row = logits.value().row(i);
    const double mx = row.maxCoeff();
    soft.row(i) = (row.array() - mx).exp();
    const double z = soft.row(i).sum();
    soft.row(i) /= z;
    total += (mx + std::log(z)) - row(i);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);
  return make_node(std::move(out), {logits}, [soft = std::move(soft)](Node& self) {
    const Index n = soft.rows();
    Matrix g = soft;
    g.diagonal().array() -= 1.0;
    parent(self, 0).accumulate(g * (self.grad(0, 0) / static_cast<double>(n)));
  });
}

}  // namespace lsdm::nn
