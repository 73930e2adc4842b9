#include "lsdm/env/embedding.hpp"

#include "lsdm/common/binary.hpp"
#include "lsdm/common/error.hpp"
#include "lsdm/common/files.hpp"
#include "lsdm/env/text.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace lsdm::env {

using nlohmann::json;

RowVector fuse(const RowVector& z_image, const RowVector& z_text, double alpha, double beta) {
  if (z_image.size() != z_text.size()) throw ShapeError("fuse: embedding lengths differ");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ValidationError("fusion weights must be non-negative");
  if (alpha == 0.0 && beta == 0.0) warn("fusion weights are both zero; environment embedding is the zero vector");
  return alpha * z_image + beta * z_text;
}

EnvEmbedding embed_context(const Eigen::RowVectorXi& poi, const RowVector& tile, const DualTower& towers,
                           const FusionWeights& fusion, int top_k, const data::PoiCatalog& catalog) {
  EnvEmbedding e;
  e.z_image = towers.encode_image(tile);
  e.z_text = towers.encode_text(poi_to_text(poi, catalog, top_k));
  e.z_env = fuse(e.z_image, e.z_text, fusion.alpha, fusion.beta);
  e.weights = fusion;
  return e;
}

Matrix embed_contexts(const std::vector<Eigen::RowVectorXi>& pois, const Matrix& tiles, const DualTower& towers,
                      const FusionWeights& fusion, int top_k, const data::PoiCatalog& catalog) {
  if (static_cast<Index>(pois.size()) != tiles.rows()) throw ShapeError("embed_contexts: poi/tile counts differ");
  if (tiles.cols() != towers.config().tile_shape.size()) throw ShapeError("embed_contexts: tile width mismatch");
  if (!tiles.allFinite()) throw ValidationError("tile contains non-finite entries");
  if (!(fusion.alpha >= 0.0) || !(fusion.beta >= 0.0)) throw ValidationError("fusion weights must be non-negative");
  if (fusion.alpha == 0.0 && fusion.beta == 0.0) {
    warn("fusion weights are both zero; environment embedding is the zero vector");
  }
  if (pois.empty()) return Matrix(0, towers.config().embed_dim);
  std::vector<TextDescription> texts;
  texts.reserve(pois.size());
  for (const auto& p : pois) texts.push_back(poi_to_text(p, catalog, top_k));
  nn::NoGradGuard guard;
  const Matrix zi = towers.encode_images(nn::constant(tiles)).value();
  const Matrix zt = towers.encode_texts(texts).value();
  return fusion.alpha * zi + fusion.beta * zt;
}

EnvEmbedding embed_context(const ProvidedVectors& provided, int embed_dim, const FusionWeights& fusion) {
  for (const auto* v : {&provided.z_image, &provided.z_text}) {
    if (v->size() != embed_dim) {
      throw ShapeError("provider vector has length " + std::to_string(v->size()) + ", expected " +
                       std::to_string(embed_dim));
    }
    if (!v->allFinite()) throw ValidationError("provider vector contains non-finite entries");
  }
  EnvEmbedding e;
  e.z_image = provided.z_image;
  e.z_text = provided.z_text;
  e.z_env = fuse(e.z_image, e.z_text, fusion.alpha, fusion.beta);
  e.weights = fusion;
  return e;
}

void EmbeddingProvider::insert(const std::string& user_id, long t, ProvidedVectors vectors) {
  if (vectors.z_image.size() != embed_dim_ || vectors.z_text.size() != embed_dim_) {
    throw ShapeError("provider vectors must have length " + std::to_string(embed_dim_));
  }
  entries_[{user_id, t}] = std::move(vectors);
}

const ProvidedVectors* EmbeddingProvider::find(const std::string& user_id, long t) const {
  auto it = entries_.find({user_id, t});
  return it == entries_.end() ? nullptr : &it->second;
}

void EmbeddingProvider::save(const std::filesystem::path& index_path) const {
  std::vector<unsigned char> blob;
  json entries = json::array();
  for (const auto& [key, v] : entries_) {
    entries.push_back({{"user_id", key.first}, {"t", key.second}, {"offset", blob.size()}});
    for (const auto* vec : {&v.z_image, &v.z_text}) {
      for (Index i = 0; i < vec->size(); ++i) binary::put_f32(blob, static_cast<float>((*vec)(i)));
    }
  }
  auto blob_path = index_path;
  blob_path.replace_extension(".bin");
  json index = {{"version", 1},
                {"embed_dim", embed_dim_},
                {"blob", blob_path.filename().string()},
                {"entries", std::move(entries)}};
  write_binary_file(blob_path, blob);
  write_text_file(index_path, index.dump(2) + "\n");
}

EmbeddingProvider EmbeddingProvider::load(const std::filesystem::path& index_path) {
  json index;
  try {
    index = json::parse(read_text_file(index_path));
  } catch (const json::exception& e) {
    throw IoError(index_path.string() + ": malformed provider index: " + e.what());
  }
  try {
    if (index.at("version").get<int>() != 1) {
      throw VersionError(index_path.string() + ": unsupported provider index version " +
                         index.at("version").dump());
    }
    const int dim = index.at("embed_dim").get<int>();
    if (dim < 1) throw ValidationError(index_path.string() + ": embed_dim must be positive");
    const auto blob = read_binary_file(index_path.parent_path() / index.at("blob").get<std::string>());
    const std::size_t record = 2 * static_cast<std::size_t>(dim) * 4;
    EmbeddingProvider provider(dim);
    for (const auto& e : index.at("entries")) {
      const auto offset = e.at("offset").get<std::size_t>();
      if (offset % 4 != 0 || offset + record > blob.size()) {
        throw IoError(index_path.string() + ": entry offset " + std::to_string(offset) + " outside blob of " +
                      std::to_string(blob.size()) + " bytes");
      }
      ProvidedVectors v{RowVector(dim), RowVector(dim)};
      for (int i = 0; i < dim; ++i) {
        v.z_image(i) = binary::get_f32(blob, offset + 4 * static_cast<std::size_t>(i));
        v.z_text(i) = binary::get_f32(blob, offset + 4 * static_cast<std::size_t>(dim + i));
      }
      provider.insert(e.at("user_id").get<std::string>(), e.at("t").get<long>(), std::move(v));
    }
    return provider;
  } catch (const json::exception& e) {
    throw IoError(index_path.string() + ": malformed provider index: " + e.what());
  }
}

}  // namespace lsdm::env
