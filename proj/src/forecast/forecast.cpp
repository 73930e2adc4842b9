#include "lsdm/forecast/forecast.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/random.hpp"
#include "lsdm/data/catalog.hpp"
#include "lsdm/diffusion/process.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lsdm::forecast {

namespace {

void require_trained(const LsdmModel& model) {
  if (!model.trained) throw ValidationError("model has not been trained");
}

void require_samples(int samples) {
  if (samples < 1) throw ValidationError("sample count must be >= 1");
}

double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix slide(const Matrix& history, const RowVector& next) {
  Matrix h(history.rows(), history.cols());
  if (history.rows() > 1) h.topRows(history.rows() - 1) = history.bottomRows(history.rows() - 1);
  h.row(history.rows() - 1) = next;
  return h;
}

}  // namespace

std::uint64_t step_seed(std::uint64_t seed, int step) {
  return step == 0 ? seed : derive_seed(seed, 0x57e9, static_cast<std::uint64_t>(step));
}

Matrix predict_normalized(const LsdmModel& model, std::span<const Matrix> histories, std::span<const Context> contexts,
                          int samples, std::span<const std::uint64_t> seeds, std::vector<Matrix>* raw_samples) {
  require_trained(model);
  require_samples(samples);
  if (seeds.size() != histories.size()) throw ShapeError("one seed per request required");
  const auto n = static_cast<Index>(histories.size());
  const Index k = model.services();
  const Index len = model.denoiser.config().window_len;
  if (n == 0) return Matrix(0, k);

  const Matrix cond = model.condition_inputs(histories, contexts);
  Matrix cond_rep(n * samples, cond.cols());
  diffusion::SampleOptions opts;
  opts.row_seeds.reserve(static_cast<std::size_t>(n * samples));
  for (Index i = 0; i < n; ++i) {
    for (int s = 0; s < samples; ++s) {
      cond_rep.row(i * samples + s) = cond.row(i);
      opts.row_seeds.push_back(derive_seed(seeds[static_cast<std::size_t>(i)], static_cast<std::uint64_t>(s)));
    }
  }
  const auto& den = model.denoiser;
  diffusion::EpsilonFn fn = [&den](const Matrix& x, const std::vector<int>& t, const Matrix& c) {
    return den.predict(x, t, c);
  };
  const Matrix draws = diffusion::sample(fn, cond_rep, model.schedule, {n * samples, k, len}, 0, opts);

  Matrix medians(n, k);
  std::vector<double> column(static_cast<std::size_t>(samples));
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < k; ++s) {
      for (int j = 0; j < samples; ++j) column[static_cast<std::size_t>(j)] = draws(i * samples + j, s * len);
      medians(i, s) = median_of(column);
    }
    if (raw_samples != nullptr) {
      Matrix block(samples, k);
      for (int j = 0; j < samples; ++j) {
        for (Index s = 0; s < k; ++s) block(j, s) = draws(i * samples + j, s * len);
      }
      raw_samples->push_back(model.normalizer.invert(block));
    }
  }
  return medians;
}

RowVector predict_one(const LsdmModel& model, const data::SampleWindow& window, int samples, std::uint64_t seed) {
  const Matrix h[] = {window.history};
  const Context c[] = {{window.poi_at_target, window.tile_at_target}};
  const std::uint64_t s[] = {seed};
  return model.normalizer.invert(predict_normalized(model, h, c, samples, s)).row(0);
}

Matrix predict_windows(const LsdmModel& model, std::span<const data::SampleWindow> windows, int samples,
                       std::uint64_t seed, std::size_t chunk) {
  Matrix out(static_cast<Index>(windows.size()), model.services());
  chunk = std::max<std::size_t>(1, chunk);
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    const std::size_t end = std::min(windows.size(), start + chunk);
    std::vector<Matrix> hs;
    std::vector<Context> cs;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = start; i < end; ++i) {
      hs.push_back(windows[i].history);
      cs.push_back({windows[i].poi_at_target, windows[i].tile_at_target});
      seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
    }
    out.middleRows(static_cast<Index>(start), static_cast<Index>(end - start)) =
        predict_normalized(model, hs, cs, samples, seeds);
  }
  return out;
}

Matrix postprocess(const Matrix& trajectory, const RowVector* floor) {
  if (!trajectory.allFinite()) throw ValidationError("postprocess: non-finite trajectory");
  if (floor != nullptr && floor->size() != trajectory.cols()) throw ShapeError("postprocess: floor width mismatch");
  Matrix clipped = trajectory;
  for (Index s = 0; s < clipped.cols(); ++s) {
    const double lo = floor != nullptr ? (*floor)(s) : 0.0;
    clipped.col(s) = clipped.col(s).cwiseMax(lo);
  }
  const Index n = clipped.rows();
  Matrix out(n, clipped.cols());
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - 1);
    const Index hi = std::min<Index>(n - 1, i + 1);
    out.row(i) = clipped.middleRows(lo, hi - lo + 1).colwise().sum() / static_cast<double>(hi - lo + 1);
  }
  return out;
}

RowVector normalized_floor(const data::Normalizer& normalizer) {
  return normalizer.apply(Matrix::Zero(1, normalizer.services())).row(0);
}

std::vector<ForecastResult> predict_recursive_batch(const LsdmModel& model, std::span<const RecursiveRequest> requests,
                                                    int steps, int samples, bool keep_samples) {
  require_trained(model);
  require_samples(samples);
  if (steps < 1) throw ValidationError("steps must be >= 1");
  const std::size_t n = requests.size();
  const Index k = model.services();
  std::vector<Matrix> histories;
  std::vector<std::vector<Context>> contexts(n);
  std::vector<ForecastResult> results(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = requests[i];
    if (r.window == nullptr) throw ValidationError("recursive request without a window");
    histories.push_back(r.window->history);
    contexts[i] = r.contexts;
    if (contexts[i].empty()) contexts[i].push_back({r.window->poi_at_target, r.window->tile_at_target});
    if (static_cast<int>(contexts[i].size()) < steps) {
      warn("context series has " + std::to_string(contexts[i].size()) + " entries for " + std::to_string(steps) +
           " steps; repeating the last context");
    }
    results[i].normalized.resize(steps, k);
  }
  const RowVector floor = normalized_floor(model.normalizer);
  for (int step = 0; step < steps; ++step) {
    std::vector<Context> cs;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(step), contexts[i].size() - 1);
      cs.push_back(contexts[i][idx]);
      seeds.push_back(step_seed(requests[i].seed, step));
      results[i].seeds.push_back(seeds.back());
    }
    std::vector<Matrix> raw;
    const Matrix next = predict_normalized(model, histories, cs, samples, seeds, keep_samples ? &raw : nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      results[i].normalized.row(step) = next.row(static_cast<Index>(i));
      histories[i] = slide(histories[i], next.row(static_cast<Index>(i)));
      if (keep_samples) results[i].per_step_samples.push_back(std::move(raw[i]));
    }
  }
  for (auto& r : results) {
    r.trajectory = model.normalizer.invert(r.normalized);
    r.postprocessed = model.normalizer.invert(postprocess(r.normalized, &floor));
  }
  return results;
}

ForecastResult predict_recursive(const LsdmModel& model, const data::SampleWindow& window, int steps,
                                 std::vector<Context> contexts, std::uint64_t seed, int samples, bool keep_samples) {
  RecursiveRequest req{&window, std::move(contexts), seed};
  return std::move(predict_recursive_batch(model, std::span<const RecursiveRequest>(&req, 1), steps, samples,
                                           keep_samples)
                       .front());
}

namespace {

nlohmann::json rows_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.row(i).data(), m.row(i).data() + m.cols());
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

nlohmann::json to_json(const ForecastResult& result, const std::string& user_id, long start_index) {
  nlohmann::json j;
  j["user_id"] = user_id;
  j["start_index"] = start_index;
  j["steps"] = result.trajectory.rows();
  std::vector<std::string> services;
  for (const auto& e : data::ServiceCatalog::standard().entries()) services.push_back(e.name);
  j["services"] = services;
  j["trajectory"] = rows_json(result.trajectory);
  j["postprocessed"] = rows_json(result.postprocessed);
  j["normalized"] = rows_json(result.normalized);
  j["seeds"] = result.seeds;
  if (!result.per_step_samples.empty()) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : result.per_step_samples) samples.push_back(rows_json(s));
    j["per_step_samples"] = std::move(samples);
  }
  return j;
}

RowVector seasonal_naive(const Matrix& history, int period) {
  if (period < 1) throw ValidationError("period must be >= 1");
  if (history.rows() < period) {
    throw ValidationError("history has " + std::to_string(history.rows()) + " rows, shorter than period " +
                          std::to_string(period));
  }
  return history.row(history.rows() - period);
}

ArModel ar_baseline_fit(const Matrix& history, int order) {
  if (order < 1) throw ValidationError("AR order must be >= 1");
  if (history.rows() <= order) throw ValidationError("history must be longer than the AR order");
  const Index rows = history.rows() - order;
  ArModel m{Matrix(order, history.cols())};
  for (Index s = 0; s < history.cols(); ++s) {
    Matrix x(rows, order);
    Eigen::VectorXd y(rows);
    for (Index i = 0; i < rows; ++i) {
      const Index t = i + order;
      y(i) = history(t, s);
      for (int j = 0; j < order; ++j) x(i, j) = history(t - 1 - j, s);
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::VectorXd rhs = x.transpose() * y;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                          ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * std::max(1.0, gram.diagonal().maxCoeff());
    if (singular) {
      gram.diagonal().array() += 1e-6;
      ldlt.compute(gram);
    }
    m.coefficients.col(s) = ldlt.solve(rhs);
  }
  return m;
}

RowVector ar_baseline_predict(const ArModel& model, const Matrix& history) {
  const Index order = model.coefficients.rows();
  if (history.rows() < order) throw ValidationError("history shorter than the AR order");
  if (history.cols() != model.coefficients.cols()) throw ShapeError("AR model and history widths differ");
  RowVector out = RowVector::Zero(history.cols());
  for (Index j = 0; j < order; ++j) {
    out += model.coefficients.row(j).cwiseProduct(history.row(history.rows() - 1 - j));
  }
  return out;
}

HorizonReport evaluate_horizon(const RecursiveForecaster& forecaster, const data::Dataset& dataset,
                               const data::Normalizer& normalizer, int history_len, std::vector<int> steps_list,
                               int windows_per_user, std::uint64_t seed, const HorizonOptions& options) {
  if (steps_list.empty()) throw ValidationError("steps list is empty");
  for (int s : steps_list) {
    if (s < 1) throw ValidationError("prediction steps must be >= 1");
  }
  std::sort(steps_list.begin(), steps_list.end());
  steps_list.erase(std::unique(steps_list.begin(), steps_list.end()), steps_list.end());
  if (windows_per_user < 1) throw ValidationError("windows_per_user must be >= 1");
  const int max_steps = steps_list.back();

  std::vector<data::SampleWindow> windows;
  std::vector<std::vector<Context>> contexts;
  std::vector<Matrix> truths;
  for (std::size_t u = 0; u < dataset.users.size(); ++u) {
    const auto& rec = dataset.users[u];
    const Index m = rec.time_points();
    const auto first = std::max<Index>(history_len, static_cast<Index>(std::ceil(options.test_fraction_start * m)));
    const Index last = m - max_steps;
    if (first > last) continue;
    std::vector<Index> candidates(static_cast<std::size_t>(last - first + 1));
    std::iota(candidates.begin(), candidates.end(), first);
    Rng rng(derive_seed(seed, 0xe7a1, u));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(windows_per_user)));
    std::sort(candidates.begin(), candidates.end());
    for (Index t : candidates) {
      windows.push_back(data::window_at(dataset, normalizer, u, t, history_len, max_steps));
      std::vector<Context> cs;
      for (int i = 0; i < max_steps; ++i) cs.push_back({rec.poi.counts.row(t + i), rec.images.tiles.row(t + i)});
      contexts.push_back(std::move(cs));
      truths.push_back(windows.back().target);
    }
  }
  if (windows.empty()) {
    throw ValidationError("insufficient history: no user has room for " + std::to_string(history_len) +
                          " history rows and " + std::to_string(max_steps) + " steps in the evaluation range");
  }

  const RowVector floor = normalized_floor(normalizer);
  const Index k = normalizer.services();
  Matrix step_sq = Matrix::Zero(max_steps, k);  // summed squared error per (step, service)
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    const std::size_t end = std::min(windows.size(), start + chunk);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = start; i < end; ++i) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const auto trajs = forecaster(std::span(windows).subspan(start, end - start),
                                  std::span(contexts).subspan(start, end - start), max_steps, seeds);
    if (trajs.size() != end - start) throw ShapeError("forecaster returned the wrong number of trajectories");
    for (std::size_t i = start; i < end; ++i) {
      const Matrix& raw = trajs[i - start];
      if (raw.rows() != max_steps || raw.cols() != k) throw ShapeError("forecaster trajectory has the wrong shape");
      const Matrix pred = options.postprocess ? postprocess(raw, &floor) : raw;
      step_sq += (pred - truths[i]).array().square().matrix();
    }
  }

  HorizonReport rep;
  rep.steps_list = steps_list;
  rep.windows = static_cast<int>(windows.size());
  const double w = static_cast<double>(windows.size());
  for (int s = 0; s < max_steps; ++s) {
    rep.step_curve.push_back(step_sq.row(s).sum() / (w * static_cast<double>(k)));
    std::vector<double> per(static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) per[static_cast<std::size_t>(j)] = step_sq(s, j) / w;
    rep.step_service_curve.push_back(std::move(per));
  }
  for (int h : steps_list) {
    rep.per_step_mse[h] = step_sq.topRows(h).sum() / (w * h * static_cast<double>(k));
    std::vector<double> per(static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) per[static_cast<std::size_t>(j)] = step_sq.col(j).head(h).sum() / (w * h);
    rep.per_service_per_step[h] = std::move(per);
  }
  return rep;
}

HorizonReport evaluate_horizon(const LsdmModel& model, const data::Dataset& dataset, std::vector<int> steps_list,
                               int windows_per_user, std::uint64_t seed, const HorizonOptions& options) {
  require_trained(model);
  RecursiveForecaster f = [&model, &options](std::span<const data::SampleWindow> windows,
                                             std::span<const std::vector<Context>> contexts, int steps,
                                             std::span<const std::uint64_t> seeds) {
    std::vector<RecursiveRequest> reqs;
    for (std::size_t i = 0; i < windows.size(); ++i) reqs.push_back({&windows[i], contexts[i], seeds[i]});
    std::vector<Matrix> out;
    for (auto& r : predict_recursive_batch(model, reqs, steps, options.samples)) out.push_back(std::move(r.normalized));
    return out;
  };
  return evaluate_horizon(f, dataset, model.normalizer, model.history_len(), std::move(steps_list), windows_per_user,
                          seed, options);
}

nlohmann::json to_json(const HorizonReport& r) {
  nlohmann::json j;
  j["steps_list"] = r.steps_list;
  nlohmann::json per = nlohmann::json::object();
  nlohmann::json per_service = nlohmann::json::object();
  for (const auto& [h, v] : r.per_step_mse) per[std::to_string(h)] = v;
  for (const auto& [h, v] : r.per_service_per_step) per_service[std::to_string(h)] = v;
  j["per_step_mse"] = std::move(per);
  j["per_service_per_step"] = std::move(per_service);
  j["step_curve"] = r.step_curve;
  j["step_service_curve"] = r.step_service_curve;
  j["windows"] = r.windows;
  return j;
}

std::string horizon_csv(const HorizonReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "step,service,mse\n";
  for (const auto& [h, v] : r.per_service_per_step) {
    for (std::size_t s = 0; s < v.size(); ++s) out << h << ',' << (s + 1) << ',' << v[s] << '\n';
  }
  return out.str();
}

}  // namespace lsdm::forecast
