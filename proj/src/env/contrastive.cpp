#include "lsdm/env/contrastive.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/random.hpp"
#include "lsdm/nn/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lsdm::env {

namespace {

// -1/n sum_i log softmax(row i)[i] for a square logit matrix.
double diagonal_cross_entropy(const Matrix& logits) {
  const Index n = logits.rows();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, i);
  }
  return total / static_cast<double>(n);
}

}  // namespace

double info_nce(const Matrix& z_images, const Matrix& z_texts, double tau) {
  if (z_images.rows() != z_texts.rows()) throw ShapeError("info_nce: batch sizes differ");
  if (z_images.cols() != z_texts.cols()) throw ShapeError("info_nce: embedding widths differ");
  if (z_images.rows() < 1) throw ShapeError("info_nce: empty batch");
  if (!(tau > 0.0)) throw ValidationError("info_nce: temperature must be positive");
  const Matrix logits = (z_images * z_texts.transpose()) / tau;
  return diagonal_cross_entropy(logits) + diagonal_cross_entropy(logits.transpose());
}

nn::Var info_nce(const nn::Var& z_images, const nn::Var& z_texts, const nn::Var& log_inv_tau) {
  if (z_images.rows() != z_texts.rows()) throw ShapeError("info_nce: batch sizes differ");
  nn::Var logits = nn::mul_by_scalar(nn::matmul_bt(z_images, z_texts), nn::exp(log_inv_tau));
  return nn::add(nn::cross_entropy_diag(logits), nn::cross_entropy_diag(nn::transpose(logits)));
}

double retrieval_top1(const Matrix& z_images, const Matrix& z_texts) {
  if (z_images.rows() != z_texts.rows() || z_images.rows() == 0) throw ShapeError("retrieval_top1: batch mismatch");
  const Matrix sim = z_images * z_texts.transpose();
  int hits = 0;
  for (Index i = 0; i < sim.rows(); ++i) {
    Index best = 0;
    sim.row(i).maxCoeff(&best);
    hits += best == i ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

std::pair<Matrix, Matrix> encode_pairs(const DualTower& towers, std::span<const ContrastivePair> pairs) {
  nn::NoGradGuard guard;
  Matrix tiles(static_cast<Index>(pairs.size()), towers.config().tile_shape.size());
  std::vector<TextDescription> texts;
  texts.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    tiles.row(static_cast<Index>(i)) = pairs[i].tile;
    texts.push_back(pairs[i].text);
  }
  return {towers.encode_images(nn::constant(std::move(tiles))).value(), towers.encode_texts(texts).value()};
}

ContrastiveLog train_contrastive(DualTower& towers, std::span<const ContrastivePair> pairs,
                                 const ContrastiveConfig& config) {
  if (config.batch_size < 2) throw ValidationError("contrastive batch size must be >= 2");
  if (pairs.size() < 2 || pairs.size() < static_cast<std::size_t>(config.batch_size)) {
    throw ValidationError("contrastive training needs at least batch_size (" + std::to_string(config.batch_size) +
                          ") pairs, got " + std::to_string(pairs.size()));
  }
  if (config.epochs < 0) throw ValidationError("contrastive epochs must be >= 0");

  nn::Adam adam(towers.parameters(), nn::AdamConfig{.learning_rate = config.learning_rate});
  const auto n = pairs.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const long batches_per_epoch = static_cast<long>(n / bs);
  const long total_steps = batches_per_epoch * config.epochs;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, 0xc0de));
  ContrastiveLog log;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      Matrix tiles(static_cast<Index>(bs), towers.config().tile_shape.size());
      std::vector<TextDescription> texts;
      for (std::size_t i = 0; i < bs; ++i) {
        const auto& p = pairs[order[static_cast<std::size_t>(b) * bs + i]];
        tiles.row(static_cast<Index>(i)) = p.tile;
        texts.push_back(p.text);
      }
      towers.parameters().zero_grad();
      nn::Var zi = towers.encode_images(nn::constant(std::move(tiles)));
      nn::Var zt = towers.encode_texts(texts);
      nn::Var loss = info_nce(zi, zt, towers.log_inv_temperature());
      nn::backward(loss);
      adam.step(nn::cosine_lr(config.learning_rate, step, total_steps));
      ++step;
      epoch_total += loss.item();
    }
    log.epoch_loss.push_back(epoch_total / static_cast<double>(std::max<long>(1, batches_per_epoch)));
  }
  towers.parameters().zero_grad();
  return log;
}

}  // namespace lsdm::env
