// Command-line front end: synth, train, eval, forecast, encode-env.
//
// Every failure ends with one line on stderr, "error: <kind>: <message>",
// and a nonzero exit status.

#include "lsdm/common/error.hpp"
#include "lsdm/common/files.hpp"
#include "lsdm/data/io.hpp"
#include "lsdm/data/synthetic.hpp"
#include "lsdm/env/embedding.hpp"
#include "lsdm/experiment/checkpoint.hpp"
#include "lsdm/experiment/config.hpp"
#include "lsdm/experiment/pipeline.hpp"
#include "lsdm/forecast/forecast.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lsdm;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 1;

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// Accepts a manifest file or a directory holding manifest.json.
fs::path manifest_path(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p)) throw IoError("dataset manifest not found: " + p.string());
  return p;
}

data::Dataset dataset_for(const experiment::RunConfig& config, const std::string& data) {
  if (!data.empty()) return data::load_dataset(manifest_path(data));
  return experiment::load_or_generate(config);
}

std::vector<int> parse_steps(const std::string& text) {
  std::vector<int> steps;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 1) {
      throw ValidationError("--steps expects positive integers separated by commas, got '" + text + "'");
    }
    steps.push_back(v);
  }
  if (steps.empty()) throw ValidationError("--steps is empty");
  return steps;
}

struct Loaded {
  experiment::Checkpoint checkpoint;
  forecast::LsdmModel model;
};

Loaded load_model(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "checkpoint.json";
  auto ck = experiment::load_checkpoint(p);
  auto model = experiment::model_from_checkpoint(ck);
  return {std::move(ck), std::move(model)};
}

int run_synth(const std::string& config_path, const fs::path& out) {
  const auto config = experiment::load_config(config_path);
  const auto dataset = experiment::load_or_generate(config);
  const auto manifest = data::write_dataset(dataset, out);
  std::cout << "wrote " << dataset.users.size() << " users to " << manifest.string() << "\n";
  return 0;
}

int run_train(const std::string& config_path, const fs::path& out, bool quiet) {
  const auto config = experiment::load_config(config_path);
  const auto dataset = experiment::load_or_generate(config);
  fs::create_directories(out);
  experiment::TrainOptions options;
  options.checkpoint_dir = out;
  if (!quiet) {
    options.on_epoch = [](const experiment::EpochRecord& r) {
      std::cerr << "epoch " << r.epoch << " loss " << r.loss << " eps_mse " << r.epsilon_mse << " x0_mse "
                << r.x0_mse << "\n";
    };
  }
  const auto started = std::chrono::steady_clock::now();
  auto result = experiment::train(config, dataset, options);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  experiment::save_checkpoint(
      experiment::make_checkpoint(result.model, result.config, result.steps, result.rng_state),
      out / "checkpoint.json");
  json log = experiment::to_json(result.log);
  log["steps"] = result.steps;
  log["elapsed_seconds"] = elapsed;  // the only wall-clock value; kept out of checkpoints and reports
  write_json(out / "train_log.json", log);
  experiment::save_config(result.config, out / "config.json");
  std::cout << "wrote " << (out / "checkpoint.json").string() << "\n";
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::string data;
  std::string steps;
  fs::path out;
  std::optional<int> samples;
  std::optional<int> windows_per_user;
  std::optional<int> max_test_windows;
  std::optional<std::uint64_t> seed;
  bool no_horizon = false;
};

int run_eval(const EvalFlags& f) {
  auto [ck, model] = load_model(f.checkpoint);
  auto config = ck.config;
  if (!f.steps.empty()) config.evaluation.steps_list = parse_steps(f.steps);
  if (f.samples) config.evaluation.samples = *f.samples;
  if (f.windows_per_user) config.evaluation.windows_per_user = *f.windows_per_user;
  if (f.max_test_windows) config.evaluation.max_test_windows = *f.max_test_windows;
  if (f.seed) config.evaluation.seed = *f.seed;
  config.validate();
  const auto dataset = dataset_for(config, f.data);

  const auto result = experiment::evaluate(model, config, dataset, !f.no_horizon);
  fs::create_directories(f.out);
  write_json(f.out / "metrics.json", metrics::to_json(result.metrics));
  write_json(f.out / "baselines.json", experiment::baselines_json(result));
  if (!f.no_horizon) {
    write_json(f.out / "horizon.json", forecast::to_json(result.horizon));
    write_text_file(f.out / "horizon.csv", forecast::horizon_csv(result.horizon));
  }
  std::cout << "mse " << result.metrics.mse << " over " << result.test_windows << " windows\n";
  return 0;
}

struct ForecastFlags {
  std::string checkpoint;
  std::string data;
  std::string user;
  int steps = 1;
  std::uint64_t seed = 0;
  int samples = 0;
  bool keep_samples = false;
  fs::path out;
};

int run_forecast(const ForecastFlags& f) {
  auto [ck, model] = load_model(f.checkpoint);
  const auto& config = ck.config;
  const auto dataset = dataset_for(config, f.data);
  if (f.steps < 1) throw ValidationError("--steps must be >= 1");

  std::size_t user = dataset.users.size();
  for (std::size_t i = 0; i < dataset.users.size(); ++i) {
    if (dataset.users[i].traffic.user_id == f.user) user = i;
  }
  if (user == dataset.users.size()) throw ValidationError("unknown user '" + f.user + "'");

  // The first held-out target of that user.
  const auto& record = dataset.users[user];
  const Index m = record.time_points();
  const Index h = config.data.history_len;
  const Index start = std::max(h, experiment::split_index(m, config.data.train_fraction));
  if (start >= m) throw ValidationError("user '" + f.user + "' has no held-out time points");
  const auto window = data::window_at(dataset, model.normalizer, user, start, h, 1);

  std::vector<forecast::Context> contexts;
  for (Index t = start; t < std::min<Index>(m, start + f.steps); ++t) {
    contexts.push_back({record.poi.counts.row(t), record.images.tiles.row(t)});
  }
  const int samples = f.samples > 0 ? f.samples : config.evaluation.samples;
  const auto result =
      forecast::predict_recursive(model, window, f.steps, std::move(contexts), f.seed, samples, f.keep_samples);
  fs::create_directories(f.out);
  write_json(f.out / "forecast.json", forecast::to_json(result, f.user, static_cast<long>(start)));
  std::cout << "wrote " << (f.out / "forecast.json").string() << "\n";
  return 0;
}

int run_encode_env(const std::string& checkpoint, const std::string& data_arg, const fs::path& out) {
  auto [ck, model] = load_model(checkpoint);
  const auto dataset = dataset_for(ck.config, data_arg);
  const auto& towers = model.towers;
  env::EmbeddingProvider provider(towers.config().embed_dim);
  const auto& catalog = data::PoiCatalog::standard();
  for (const auto& u : dataset.users) {
    std::vector<env::TextDescription> texts;
    for (Index t = 0; t < u.time_points(); ++t) texts.push_back(env::poi_to_text(u.poi.counts.row(t), catalog, model.top_k));
    nn::NoGradGuard guard;
    const Matrix zi = towers.encode_images(nn::constant(u.images.tiles)).value();
    const Matrix zt = towers.encode_texts(texts).value();
    for (Index t = 0; t < u.time_points(); ++t) {
      provider.insert(u.traffic.user_id, static_cast<long>(u.traffic.start_time + t), {zi.row(t), zt.row(t)});
    }
  }
  fs::create_directories(out);
  provider.save(out / "embeddings.json");
  std::cout << "wrote " << provider.size() << " embeddings to " << (out / "embeddings.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Service-level traffic forecasting with a conditional diffusion model"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset described by a config");
  synth->add_option("--config", config_path, "Run config (JSON)")->required();
  synth->add_option("--out", out, "Output directory")->required();

  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train towers and denoiser; write checkpoint and log");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  EvalFlags ef;
  std::uint64_t eval_seed = 0;
  int eval_samples = 0, eval_wpu = 0, eval_max = 0;
  auto* eval = app.add_subcommand("eval", "Metrics, baselines and recursive horizon report");
  eval->add_option("--checkpoint", ef.checkpoint, "Checkpoint index or directory")->required();
  eval->add_option("--data", ef.data, "Dataset manifest or directory (default: the training data)");
  eval->add_option("--steps", ef.steps, "Horizon steps, e.g. 10,20,30");
  eval->add_option("--out", out, "Output directory")->required();
  auto* o_samples = eval->add_option("--samples", eval_samples, "Diffusion samples per step")->check(CLI::PositiveNumber);
  auto* o_wpu = eval->add_option("--windows-per-user", eval_wpu, "Horizon windows per user")->check(CLI::PositiveNumber);
  auto* o_max = eval->add_option("--max-test-windows", eval_max, "Cap on one-step test windows (0 = all)")
                    ->check(CLI::NonNegativeNumber);
  auto* o_seed = eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_flag("--no-horizon", ef.no_horizon, "Skip the recursive horizon report");

  ForecastFlags ff;
  auto* fc = app.add_subcommand("forecast", "Recursive forecast for one user from the first held-out hour");
  fc->add_option("--checkpoint", ff.checkpoint, "Checkpoint index or directory")->required();
  fc->add_option("--data", ff.data, "Dataset manifest or directory (default: the training data)");
  fc->add_option("--user", ff.user, "User id")->required();
  fc->add_option("--steps", ff.steps, "Number of recursive steps")->required()->check(CLI::PositiveNumber);
  fc->add_option("--seed", ff.seed, "Sampling seed");
  fc->add_option("--samples", ff.samples, "Diffusion samples per step (default: from the config)")
      ->check(CLI::NonNegativeNumber);
  fc->add_flag("--keep-samples", ff.keep_samples, "Include every diffusion sample in the output");
  fc->add_option("--out", out, "Output directory")->required();

  std::string enc_checkpoint, enc_data;
  auto* enc = app.add_subcommand("encode-env", "Write tower embeddings for every (user, hour) in provider format");
  enc->add_option("--checkpoint", enc_checkpoint, "Checkpoint index or directory")->required();
  enc->add_option("--data", enc_data, "Dataset manifest or directory (default: the training data)");
  enc->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (*synth) return run_synth(config_path, out);
    if (*train) return run_train(config_path, out, quiet);
    if (*eval) {
      ef.out = out;
      if (*o_samples) ef.samples = eval_samples;
      if (*o_wpu) ef.windows_per_user = eval_wpu;
      if (*o_max) ef.max_test_windows = eval_max;
      if (*o_seed) ef.seed = eval_seed;
      return run_eval(ef);
    }
    if (*fc) {
      ff.out = out;
      return run_forecast(ff);
    }
    if (*enc) return run_encode_env(enc_checkpoint, enc_data, out);
  } catch (const VersionError& e) {
    std::cerr << "error: version: " << one_line(e.what()) << "\n";
  } catch (const IoError& e) {
    std::cerr << "error: io: " << one_line(e.what()) << "\n";
  } catch (const ShapeError& e) {
    std::cerr << "error: shape: " << one_line(e.what()) << "\n";
  } catch (const ValidationError& e) {
    std::cerr << "error: validation: " << one_line(e.what()) << "\n";
  } catch (const experiment::TrainingDiverged& e) {
    std::cerr << "error: diverged: " << one_line(e.what()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
  }
  return kExitFailure;
}
