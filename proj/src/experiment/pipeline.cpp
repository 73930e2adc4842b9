#include "lsdm/experiment/pipeline.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/random.hpp"
#include "lsdm/data/io.hpp"
#include "lsdm/data/synthetic.hpp"
#include "lsdm/diffusion/process.hpp"
#include "lsdm/env/text.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lsdm::experiment {

namespace {

std::string rng_state_of(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

}  // namespace

data::Dataset load_or_generate(const RunConfig& config) {
  if (config.data.manifest) return data::load_dataset(*config.data.manifest);
  return data::generate_synthetic(config.data.synthetic);
}

Index split_index(Index m, double train_fraction) {
  return static_cast<Index>(std::floor(static_cast<double>(m) * train_fraction));
}

data::Normalizer fit_training_normalizer(const data::Dataset& dataset, double train_fraction) {
  data::Dataset head;
  head.tile_shape = dataset.tile_shape;
  head.hours_per_week = dataset.hours_per_week;
  for (const auto& u : dataset.users) {
    const Index split = std::max<Index>(1, split_index(u.time_points(), train_fraction));
    data::UserRecord r;
    r.traffic = {u.traffic.user_id, u.traffic.start_time, u.traffic.values.topRows(split)};
    r.poi = {u.poi.user_id, u.poi.counts.topRows(split)};
    r.images = {u.images.user_id, u.images.shape, u.images.tiles.topRows(split)};
    head.users.push_back(std::move(r));
  }
  return data::Normalizer::fit(head);
}

WindowSplit split_windows(const data::Dataset& dataset, const data::Normalizer& normalizer, const RunConfig& config) {
  const Index h = config.data.history_len;
  const Index len = config.data.horizon;
  WindowSplit out;
  for (auto& w : data::make_windows(dataset, normalizer, h, len)) {
    const Index split = split_index(dataset.users[w.user_index].time_points(), config.data.train_fraction);
    if (w.target_index + len <= split) {
      out.train.push_back(std::move(w));
    } else if (w.target_index >= split) {
      out.test.push_back(std::move(w));
    }
  }
  if (out.train.empty()) throw ValidationError("no training windows: series too short for the history length");
  if (out.test.empty()) throw ValidationError("no held-out windows: series too short for the train fraction");
  return out;
}

std::vector<env::ContrastivePair> contrastive_pairs(const data::Dataset& dataset, double train_fraction, int top_k) {
  std::vector<env::ContrastivePair> pairs;
  const auto& catalog = data::PoiCatalog::standard();
  for (const auto& u : dataset.users) {
    const Index split = split_index(u.time_points(), train_fraction);
    for (Index t = 0; t < split; ++t) {
      pairs.push_back({u.images.tiles.row(t), env::poi_to_text(u.poi.counts.row(t), catalog, top_k)});
    }
  }
  return pairs;
}

Matrix diffusion_targets(std::span<const data::SampleWindow> windows) {
  if (windows.empty()) return Matrix(0, 0);
  const Index len = windows.front().target.rows();
  const Index k = windows.front().target.cols();
  Matrix x0(static_cast<Index>(windows.size()), k * len);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (Index s = 0; s < k; ++s) {
      for (Index l = 0; l < len; ++l) x0(static_cast<Index>(i), s * len + l) = windows[i].target(l, s);
    }
  }
  return x0;
}

nlohmann::json to_json(const TrainLog& log) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"epsilon_mse", e.epsilon_mse},
                      {"x0_mse", e.x0_mse},
                      {"x0_cosine", e.x0_cosine},
                      {"grad_norm", e.grad_norm}});
  }
  return {{"contrastive_loss", log.contrastive_loss}, {"epochs", std::move(epochs)}};
}

namespace {

Matrix all_conditions(const forecast::LsdmModel& model, std::span<const data::SampleWindow> windows) {
  Matrix out(static_cast<Index>(windows.size()), model.denoiser.config().condition_input_width());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, windows.size() - start);
    out.middleRows(static_cast<Index>(start), static_cast<Index>(n)) =
        model.condition_inputs(windows.subspan(start, n));
  }
  return out;
}

}  // namespace

TrainOutput train(RunConfig config, const data::Dataset& dataset, const TrainOptions& options) {
  if (dataset.empty()) throw ValidationError("cannot train on an empty dataset");
  config.data.synthetic.tile_shape = dataset.tile_shape;
  config.sync_derived();
  config.validate();
  const auto& tr = config.training;

  data::Normalizer normalizer = fit_training_normalizer(dataset, config.data.train_fraction);
  const WindowSplit split = split_windows(dataset, normalizer, config);
  forecast::LsdmModel model = build_model(config, normalizer);
  TrainLog log;

  const auto pairs = contrastive_pairs(dataset, config.data.train_fraction, config.model.top_k);
  auto contrastive_epoch_config = [&](int epochs, std::uint64_t stream) {
    env::ContrastiveConfig cc;
    cc.epochs = epochs;
    cc.batch_size = tr.contrastive_batch_size;
    cc.learning_rate = tr.contrastive_learning_rate;
    cc.seed = derive_seed(tr.seed, 0xc0, stream);
    return cc;
  };
  const bool use_env = config.model.denoiser.conditional;
  if (use_env && tr.contrastive_epochs > 0) {
    const auto cl = env::train_contrastive(model.towers, pairs, contrastive_epoch_config(tr.contrastive_epochs, 0));
    log.contrastive_loss = cl.epoch_loss;
  }

  const Matrix x0_all = diffusion_targets(split.train);
  Matrix cond_all = all_conditions(model, split.train);
  const auto n = static_cast<std::size_t>(x0_all.rows());
  const auto bs = static_cast<std::size_t>(tr.batch_size);
  const long batches = static_cast<long>((n + bs - 1) / bs);
  const long total_steps = batches * tr.epochs;

  nn::AdamConfig ac;
  ac.learning_rate = tr.learning_rate;
  ac.grad_clip = tr.grad_clip;
  nn::Adam adam(model.denoiser.parameters(), ac);
  Rng rng(derive_seed(tr.seed, 0x7a1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& den = model.denoiser;
  diffusion::EpsilonVarFn fn = [&den](const nn::Var& x, const std::vector<int>& t, const Matrix& c) {
    return den.forward(x, t, c);
  };

  long step = 0;
  auto save_to = [&](const std::filesystem::path& p) {
    const bool was = model.trained;
    model.trained = true;
    save_checkpoint(make_checkpoint(model, config, step, rng_state_of(rng)), p);
    model.trained = was;
  };

  for (int epoch = 1; epoch <= tr.epochs; ++epoch) {
    if (tr.joint && use_env && epoch > 1) {
      const auto cl = env::train_contrastive(model.towers, pairs, contrastive_epoch_config(1, epoch));
      log.contrastive_loss.push_back(cl.epoch_loss.front());
      cond_all = all_conditions(model, split.train);
    }
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (long b = 0; b < batches; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * bs;
      const std::size_t end = std::min(n, begin + bs);
      Matrix x0(static_cast<Index>(end - begin), x0_all.cols());
      Matrix cond(static_cast<Index>(end - begin), cond_all.cols());
      for (std::size_t i = begin; i < end; ++i) {
        x0.row(static_cast<Index>(i - begin)) = x0_all.row(static_cast<Index>(order[i]));
        cond.row(static_cast<Index>(i - begin)) = cond_all.row(static_cast<Index>(order[i]));
      }
      const auto batch = diffusion::make_batch(std::move(x0), std::move(cond), model.schedule, rng);
      model.denoiser.parameters().zero_grad();
      const auto terms = diffusion::training_loss(batch, fn, model.schedule, config.model.loss);
      const double loss = terms.loss.item();
      if (!std::isfinite(loss)) {
        if (options.checkpoint_dir) save_to(*options.checkpoint_dir / "diverged.json");
        throw TrainingDiverged("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step));
      }
      nn::backward(terms.loss);
      rec.grad_norm += adam.step(nn::cosine_lr(tr.learning_rate, step, total_steps));
      ++step;
      rec.loss += loss;
      rec.epsilon_mse += terms.epsilon_mse;
      rec.x0_mse += terms.x0_mse;
      rec.x0_cosine += terms.x0_cosine;
    }
    const double nb = static_cast<double>(batches);
    rec.loss /= nb;
    rec.epsilon_mse /= nb;
    rec.x0_mse /= nb;
    rec.x0_cosine /= nb;
    rec.grad_norm /= nb;
    log.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (options.checkpoint_dir && tr.checkpoint_every > 0 && epoch % tr.checkpoint_every == 0) {
      save_to(*options.checkpoint_dir / ("checkpoint-epoch-" + std::to_string(epoch) + ".json"));
    }
  }
  model.denoiser.parameters().zero_grad();
  model.trained = true;
  const std::string state = rng_state_of(rng);
  return TrainOutput{std::move(model), std::move(config), std::move(log), step, state};
}

EvalOutput evaluate(const forecast::LsdmModel& model, const RunConfig& config, const data::Dataset& dataset,
                    bool with_horizon) {
  const auto& ev = config.evaluation;
  WindowSplit split = split_windows(dataset, model.normalizer, config);
  std::vector<data::SampleWindow> test = std::move(split.test);
  if (ev.max_test_windows > 0 && test.size() > static_cast<std::size_t>(ev.max_test_windows)) {
    std::vector<data::SampleWindow> picked;
    const std::size_t want = static_cast<std::size_t>(ev.max_test_windows);
    for (std::size_t i = 0; i < want; ++i) picked.push_back(std::move(test[i * test.size() / want]));
    test = std::move(picked);
  }

  const Index k = model.services();
  Matrix truth(static_cast<Index>(test.size()), k);
  Matrix naive(truth.rows(), k);
  Matrix ar(truth.rows(), k);
  const int period = std::min(24, config.data.history_len);
  const int order = std::min(3, config.data.history_len - 1);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto r = static_cast<Index>(i);
    truth.row(r) = test[i].target.row(0);
    naive.row(r) = forecast::seasonal_naive(test[i].history, period);
    ar.row(r) = order >= 1 ? forecast::ar_baseline_predict(forecast::ar_baseline_fit(test[i].history, order),
                                                           test[i].history)
                           : test[i].history.row(test[i].history.rows() - 1);
  }
  Matrix pred = forecast::predict_windows(model, test, ev.samples, ev.seed);
  if (ev.raw_space) {
    truth = model.normalizer.invert(truth);
    pred = model.normalizer.invert(pred);
    naive = model.normalizer.invert(naive);
    ar = model.normalizer.invert(ar);
  }

  EvalOutput out;
  out.test_windows = static_cast<int>(test.size());
  out.metrics = metrics::compute_metrics_with_services(truth, pred);
  out.seasonal_naive = metrics::compute_metrics_with_services(truth, naive);
  out.autoregressive = metrics::compute_metrics_with_services(truth, ar);
  if (with_horizon) {
    forecast::HorizonOptions ho;
    ho.samples = ev.samples;
    ho.test_fraction_start = config.data.train_fraction;
    out.horizon = forecast::evaluate_horizon(model, dataset, ev.steps_list, ev.windows_per_user, ev.seed, ho);
  }
  return out;
}

nlohmann::json baselines_json(const EvalOutput& out) {
  return {{"seasonal_naive", metrics::to_json(out.seasonal_naive)},
          {"autoregressive", metrics::to_json(out.autoregressive)},
          {"test_windows", out.test_windows}};
}

}  // namespace lsdm::experiment
