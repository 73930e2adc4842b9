#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/catalog.hpp"
#include "lsdm/env/towers.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lsdm::env {

struct FusionWeights {
  double alpha = 0.5;  // image weight
  double beta = 0.5;   // text weight
};

struct EnvEmbedding {
  RowVector z_image;
  RowVector z_text;
  RowVector z_env;
  FusionWeights weights;
};

/// alpha * z_image + beta * z_text. Negative weights are rejected; both zero warns.
RowVector fuse(const RowVector& z_image, const RowVector& z_text, double alpha, double beta);

/// Externally computed (z_image, z_text) for one location/time.
struct ProvidedVectors {
  RowVector z_image;
  RowVector z_text;
};

/// Precomputed embeddings keyed by (user_id, t).
class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(int embed_dim) : embed_dim_(embed_dim) {}

  static EmbeddingProvider load(const std::filesystem::path& index_path);
  /// Writes `<stem>.json` plus the blob next to it; returns the index path.
  void save(const std::filesystem::path& index_path) const;

  void insert(const std::string& user_id, long t, ProvidedVectors vectors);
  [[nodiscard]] const ProvidedVectors* find(const std::string& user_id, long t) const;
  [[nodiscard]] int embed_dim() const { return embed_dim_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }

 private:
  int embed_dim_;
  std::map<std::pair<std::string, long>, ProvidedVectors> entries_;
};

/// Tower path: templated text from `poi`, image tower on `tile`, then fusion.
EnvEmbedding embed_context(const Eigen::RowVectorXi& poi, const RowVector& tile, const DualTower& towers,
                           const FusionWeights& fusion, int top_k = 5,
                           const data::PoiCatalog& catalog = data::PoiCatalog::standard());

/// Batched tower path; row i of the result is z_env for (pois[i], tiles.row(i)).
Matrix embed_contexts(const std::vector<Eigen::RowVectorXi>& pois, const Matrix& tiles, const DualTower& towers,
                      const FusionWeights& fusion, int top_k = 5,
                      const data::PoiCatalog& catalog = data::PoiCatalog::standard());

/// Provider path: vectors are used as-is and fused.
EnvEmbedding embed_context(const ProvidedVectors& provided, int embed_dim, const FusionWeights& fusion);

}  // namespace lsdm::env
