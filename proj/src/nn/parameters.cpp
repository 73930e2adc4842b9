#include "lsdm/nn/parameters.hpp"

#include "lsdm/common/error.hpp"

#include <cmath>
#include <numbers>

namespace lsdm::nn {

void round_to_float(Matrix& m) {
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

Var ParameterStore::add(const std::string& name, Matrix init) {
  if (index_.contains(name)) throw ValidationError("duplicate parameter name: " + name);
  round_to_float(init);
  Var v(std::move(init), true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, v});
  return v;
}

const Var& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
  return entries_[it->second].var;
}

bool ParameterStore::contains(const std::string& name) const { return index_.contains(name); }

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
  return n;
}

void ParameterStore::zero_grad() const {
  for (const auto& e : entries_) e.var.zero_grad();
}

void ParameterStore::assign_from(const ParameterStore& other) {
  for (auto& e : entries_) {
    const Var& src = other.get(e.name);
    if (src.rows() != e.var.rows() || src.cols() != e.var.cols()) {
      throw ShapeError("parameter " + e.name + " has a different shape in the source");
    }
    e.var.mutable_value() = src.value();
  }
}

Matrix uniform_init(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix normal_init(Index rows, Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * standard_normal(rng);
  return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng,
               bool zero_init) {
  weight_ = store.add(name + ".weight", zero_init ? Matrix(Matrix::Zero(in, out))
                                                  : uniform_init(in, out, in, rng));
  bias_ = store.add(name + ".bias", Matrix::Zero(1, out));
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
  for (const auto& e : store.entries()) {
    params_.push_back(e.var);
    m_.emplace_back(Matrix::Zero(e.var.rows(), e.var.cols()));
    v_.emplace_back(Matrix::Zero(e.var.rows(), e.var.cols()));
  }
}

double Adam::step(double learning_rate) {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (p.grad().size() != 0) sq += p.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double clip = (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = params_[i].grad();
    if (g.size() == 0) continue;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * clip * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * (clip * g).cwiseAbs2();
    Matrix& w = params_[i].mutable_value();
    w.array() -= learning_rate * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    round_to_float(w);
  }
  return norm;
}

double cosine_lr(double base, long step, long total_steps) {
  if (total_steps <= 0) return base;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace lsdm::nn
