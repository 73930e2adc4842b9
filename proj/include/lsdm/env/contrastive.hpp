#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/env/text.hpp"
#include "lsdm/env/towers.hpp"
#include "lsdm/nn/autograd.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lsdm::env {

/// Bidirectional InfoNCE over a batch of matched rows:
///   -1/n sum_i log softmax_j(zi_i . zt_j / tau)[i]  -  1/n sum_i log softmax_j(zt_i . zi_j / tau)[i].
/// Inputs are expected unit-normalized; rows pair up by index.
double info_nce(const Matrix& z_images, const Matrix& z_texts, double tau);

/// Differentiable variant; `log_inv_tau` is the 1x1 log(1/tau).
nn::Var info_nce(const nn::Var& z_images, const nn::Var& z_texts, const nn::Var& log_inv_tau);

/// Fraction of rows whose matched text is the highest-similarity text (image -> text).
double retrieval_top1(const Matrix& z_images, const Matrix& z_texts);

struct ContrastivePair {
  RowVector tile;
  TextDescription text;
};

struct ContrastiveConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct ContrastiveLog {
  std::vector<double> epoch_loss;  // mean InfoNCE per epoch
};

/// Trains the towers in place with Adam on InfoNCE; deterministic given the seed.
ContrastiveLog train_contrastive(DualTower& towers, std::span<const ContrastivePair> pairs,
                                 const ContrastiveConfig& config);

/// Encodes a set of pairs without recording a graph: (images, texts) as rows.
std::pair<Matrix, Matrix> encode_pairs(const DualTower& towers, std::span<const ContrastivePair> pairs);

}  // namespace lsdm::env
