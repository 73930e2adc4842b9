#include "lsdm/experiment/checkpoint.hpp"

#include "lsdm/common/binary.hpp"
#include "lsdm/common/error.hpp"
#include "lsdm/common/files.hpp"
#include "lsdm/common/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace lsdm::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path payload_path(const fs::path& index_path) {
  fs::path p = index_path;
  p.replace_extension(".bin");
  return p;
}

const Matrix& require_array(const Checkpoint& ck, const std::string& name, Index rows, Index cols) {
  auto it = ck.arrays.find(name);
  if (it == ck.arrays.end()) throw IoError("checkpoint is missing array '" + name + "'");
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw ShapeError("checkpoint array '" + name + "' is " + std::to_string(it->second.rows()) + "x" +
                     std::to_string(it->second.cols()) + ", expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  return it->second;
}

void load_store(const Checkpoint& ck, const nn::ParameterStore& store) {
  for (const auto& e : store.entries()) {
    nn::Var handle = e.var;  // shares the parameter node
    handle.mutable_value() = require_array(ck, e.name, handle.rows(), handle.cols());
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& index_path) {
  std::vector<unsigned char> payload;
  json arrays = json::array();
  for (const auto& [name, m] : ck.arrays) {
    arrays.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", payload.size()}});
    for (Index i = 0; i < m.size(); ++i) {
      const double v = m.data()[i];
      if (static_cast<double>(static_cast<float>(v)) != v && std::isfinite(v)) {
        throw ValidationError("checkpoint array '" + name + "' holds a value that is not float32-representable");
      }
      binary::put_f32(payload, static_cast<float>(v));
    }
  }
  const fs::path bin = payload_path(index_path);
  json index = {{"format_version", kCheckpointVersion},
                {"config", to_json(ck.config)},
                {"step", ck.step},
                {"rng_state", ck.rng_state},
                {"payload", bin.filename().string()},
                {"payload_bytes", payload.size()},
                {"checksum", binary::fnv1a_hex(payload)},
                {"arrays", std::move(arrays)}};
  write_binary_file(bin, payload);
  write_text_file(index_path, index.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& index_path) {
  json index;
  try {
    index = json::parse(read_text_file(index_path));
  } catch (const json::parse_error& e) {
    throw IoError(index_path.string() + ": malformed checkpoint index: " + e.what());
  }
  try {
    const int version = index.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw VersionError(index_path.string() + ": checkpoint format version " + std::to_string(version) +
                         " is not supported (reader expects " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto payload = read_binary_file(index_path.parent_path() / index.at("payload").get<std::string>());
    const auto expected = index.at("payload_bytes").get<std::size_t>();
    if (payload.size() != expected) {
      throw IoError(index_path.string() + ": payload integrity error: " + std::to_string(payload.size()) +
                    " bytes, index records " + std::to_string(expected));
    }
    if (binary::fnv1a_hex(payload) != index.at("checksum").get<std::string>()) {
      throw IoError(index_path.string() + ": payload integrity error: checksum mismatch");
    }
    Checkpoint ck;
    ck.config = config_from_json(index.at("config"));
    ck.step = index.at("step").get<long>();
    ck.rng_state = index.at("rng_state").get<std::string>();
    for (const auto& a : index.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto shape = a.at("shape").get<std::vector<Index>>();
      const auto offset = a.at("offset").get<std::size_t>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw IoError("checkpoint array '" + name + "' has a bad shape");
      const auto count = static_cast<std::size_t>(shape[0] * shape[1]);
      if (offset + 4 * count > payload.size()) {
        throw IoError(index_path.string() + ": array '" + name + "' extends past the payload");
      }
      Matrix m(shape[0], shape[1]);
      for (std::size_t i = 0; i < count; ++i) m.data()[i] = binary::get_f32(payload, offset + 4 * i);
      ck.arrays.emplace(name, std::move(m));
    }
    return ck;
  } catch (const json::exception& e) {
    throw IoError(index_path.string() + ": malformed checkpoint index: " + e.what());
  }
}

Checkpoint make_checkpoint(const forecast::LsdmModel& model, const RunConfig& config, long step,
                           std::string rng_state) {
  Checkpoint ck{config, {}, step, std::move(rng_state)};
  for (const auto* store : {&model.towers.parameters(), &model.denoiser.parameters()}) {
    for (const auto& e : store->entries()) ck.arrays.emplace(e.name, e.var.value());
  }
  const auto& stats = model.normalizer.stats();
  const auto k = static_cast<Index>(stats.size());
  Matrix mean(1, k), std(1, k), constant(1, k);
  for (Index s = 0; s < k; ++s) {
    mean(0, s) = stats[static_cast<std::size_t>(s)].mean;
    std(0, s) = stats[static_cast<std::size_t>(s)].std;
    constant(0, s) = stats[static_cast<std::size_t>(s)].is_constant ? 1.0 : 0.0;
  }
  ck.arrays.emplace("normalizer.mean", mean);
  ck.arrays.emplace("normalizer.std", std);
  ck.arrays.emplace("normalizer.is_constant", constant);
  Matrix betas(1, model.schedule.steps);
  for (int t = 0; t < model.schedule.steps; ++t) {
    betas(0, t) = static_cast<double>(static_cast<float>(model.schedule.beta[static_cast<std::size_t>(t)]));
  }
  ck.arrays.emplace("schedule.beta", betas);
  return ck;
}

forecast::LsdmModel build_model(const RunConfig& config, data::Normalizer normalizer) {
  const auto seed = config.training.seed;
  env::DualTower towers(config.model.towers, derive_seed(seed, 0x701));
  denoiser::Denoiser den(config.model.denoiser, derive_seed(seed, 0xde0));
  const auto& s = config.model.schedule;
  return forecast::LsdmModel(std::move(normalizer), std::move(towers), std::move(den),
                             diffusion::make_schedule(s.kind, s.steps, s.beta_min, s.beta_max), config.model.fusion,
                             config.model.top_k);
}

forecast::LsdmModel model_from_checkpoint(const Checkpoint& ck) {
  const Index k = ck.config.model.denoiser.services;
  const Matrix& mean = require_array(ck, "normalizer.mean", 1, k);
  const Matrix& std = require_array(ck, "normalizer.std", 1, k);
  const Matrix& constant = require_array(ck, "normalizer.is_constant", 1, k);
  std::vector<data::ServiceStats> stats;
  for (Index s = 0; s < k; ++s) stats.push_back({mean(0, s), std(0, s), constant(0, s) != 0.0});
  forecast::LsdmModel model = build_model(ck.config, data::Normalizer(std::move(stats)));
  load_store(ck, model.towers.parameters());
  load_store(ck, model.denoiser.parameters());
  const Matrix& betas = require_array(ck, "schedule.beta", 1, model.schedule.steps);
  for (int t = 0; t < model.schedule.steps; ++t) {
    const float stored = static_cast<float>(betas(0, t));
    if (stored != static_cast<float>(model.schedule.beta[static_cast<std::size_t>(t)])) {
      throw IoError("checkpoint schedule does not match its configuration at step " + std::to_string(t + 1));
    }
  }
  model.trained = true;
  return model;
}

}  // namespace lsdm::experiment
