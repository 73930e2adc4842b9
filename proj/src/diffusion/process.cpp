#include "lsdm/diffusion/process.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/random.hpp"

#include <cmath>

namespace lsdm::diffusion {

namespace {

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

}  // namespace

Matrix sample(const EpsilonFn& denoiser, const Matrix& condition, const NoiseSchedule& schedule,
              const SampleShape& shape, std::uint64_t seed, const SampleOptions& options) {
  if (shape.batch < 1 || shape.services < 1 || shape.length < 1) throw ShapeError("sample: empty shape");
  if (condition.rows() != shape.batch) throw ShapeError("sample: condition rows must equal the batch size");
  if (!options.row_seeds.empty() && static_cast<Index>(options.row_seeds.size()) != shape.batch) {
    throw ShapeError("sample: one row seed per batch row required");
  }
  const Index width = shape.row_width();
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(shape.batch));
  for (Index r = 0; r < shape.batch; ++r) {
    const std::uint64_t s = options.row_seeds.empty() ? derive_seed(seed, static_cast<std::uint64_t>(r))
                                                      : options.row_seeds[static_cast<std::size_t>(r)];
    streams.emplace_back(derive_seed(s, 0x5a31));
  }
  auto draw = [&] {
    Matrix m(shape.batch, width);
    for (Index r = 0; r < shape.batch; ++r) {
      for (Index c = 0; c < width; ++c) m(r, c) = standard_normal(streams[static_cast<std::size_t>(r)]);
    }
    return m;
  };

  Matrix x;
  if (options.initial) {
    if (options.initial->rows() != shape.batch || options.initial->cols() != width) {
      throw ShapeError("sample: forced initial state has the wrong shape");
    }
    x = *options.initial;
  } else {
    x = draw();
  }
  std::vector<int> t(static_cast<std::size_t>(shape.batch));
  const Matrix zero = Matrix::Zero(shape.batch, width);
  for (int step = schedule.steps; step >= 1; --step) {
    std::fill(t.begin(), t.end(), step);
    const Matrix eps_hat = denoiser(x, t, condition);
    if (eps_hat.rows() != x.rows() || eps_hat.cols() != x.cols()) {
      throw ShapeError("sample: denoiser returned " + std::to_string(eps_hat.rows()) + "x" +
                       std::to_string(eps_hat.cols()) + ", expected " + std::to_string(x.rows()) + "x" +
                       std::to_string(x.cols()));
    }
    if (step > 1 && !options.deterministic) {
      x = reverse_step(x, step, eps_hat, draw(), schedule);
    } else {
      x = reverse_step(x, step, eps_hat, zero, schedule);
    }
  }
  return x;
}

DiffusionBatch make_batch(Matrix x0, Matrix condition, const NoiseSchedule& schedule, Rng& rng) {
  if (x0.rows() != condition.rows()) throw ShapeError("make_batch: x0 and condition row counts differ");
  DiffusionBatch b;
  std::uniform_int_distribution<int> step(1, schedule.steps);
  b.t.resize(static_cast<std::size_t>(x0.rows()));
  for (auto& t : b.t) t = step(rng);
  b.epsilon = normal_matrix(x0.rows(), x0.cols(), rng);
  b.x0 = std::move(x0);
  b.condition = std::move(condition);
  return b;
}

void validate(const LossWeights& w) {
  if (!(w.epsilon >= 0.0) || !(w.mse >= 0.0) || !(w.cosine >= 0.0)) {
    throw ValidationError("loss weights must be non-negative");
  }
  if (w.epsilon == 0.0 && w.mse == 0.0 && w.cosine == 0.0) throw ValidationError("loss weights are all zero");
}

LossTerms training_loss(const DiffusionBatch& batch, const EpsilonVarFn& denoiser, const NoiseSchedule& schedule,
                        const LossWeights& weights) {
  validate(weights);
  const Index rows = batch.x0.rows();
  const Index cols = batch.x0.cols();
  if (batch.epsilon.rows() != rows || batch.epsilon.cols() != cols) throw ShapeError("training_loss: epsilon shape");
  if (static_cast<Index>(batch.t.size()) != rows) throw ShapeError("training_loss: one step index per row required");
  if (batch.condition.rows() != rows) throw ShapeError("training_loss: condition rows must equal the batch size");

  // Per-row sqrt(alpha_bar) and sqrt(1 - alpha_bar), broadcast across columns.
  Matrix keep(rows, cols);
  Matrix noise(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const double ab = schedule.alpha_bar_at(batch.t[static_cast<std::size_t>(i)]);
    keep.row(i).setConstant(std::sqrt(ab));
    noise.row(i).setConstant(std::sqrt(1.0 - ab));
  }
  const Matrix x_t = keep.cwiseProduct(batch.x0) + noise.cwiseProduct(batch.epsilon);
  nn::Var eps_hat = denoiser(nn::constant(x_t), batch.t, batch.condition);
  if (eps_hat.rows() != rows || eps_hat.cols() != cols) throw ShapeError("training_loss: denoiser output shape");

  const nn::Var eps = nn::constant(batch.epsilon);
  const nn::Var x0 = nn::constant(batch.x0);
  // x0_hat = (x_t - sqrt(1 - ab) eps_hat) / sqrt(ab)
  const nn::Var x0_hat = nn::mul(nn::sub(nn::constant(x_t), nn::mul(eps_hat, nn::constant(noise))),
                                 nn::constant(keep.cwiseInverse()));

  LossTerms out;
  nn::Var e = nn::mse(eps_hat, eps);
  nn::Var m = nn::mse(x0_hat, x0);
  out.epsilon_mse = e.item();
  out.x0_mse = m.item();
  nn::Var total = nn::add(nn::scale(e, weights.epsilon), nn::scale(m, weights.mse));
  if (weights.cosine > 0.0) {
    nn::Var c = nn::cosine_loss(x0_hat, x0);
    out.x0_cosine = c.item();
    total = nn::add(total, nn::scale(c, weights.cosine));
  }
  out.loss = total;
  return out;
}

}  // namespace lsdm::diffusion
