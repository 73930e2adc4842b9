#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/catalog.hpp"

#include <string>
#include <vector>

namespace lsdm::env {

/// Templated description of a location's POI counts and its token ids.
struct TextDescription {
  std::string text;
  std::vector<int> token_ids;

  bool operator==(const TextDescription&) const = default;
};

/// Closed vocabulary: template glue words, five count buckets, and one
/// token per POI category.
class Vocabulary {
 public:
  enum Glue : int { kArea = 0, kWith, kNo, kRecorded, kPoints, kOf, kInterest, kComma, kGlueCount };
  static constexpr int kBucketCount = 5;

  [[nodiscard]] static int size() { return kGlueCount + kBucketCount + data::kPoiCategoryCount; }
  /// Bucket for a count: 0 | 1-2 | 3-5 | 6-10 | 11+.
  [[nodiscard]] static int bucket_of(int count);
  [[nodiscard]] static int bucket_token(int count) { return kGlueCount + bucket_of(count); }
  [[nodiscard]] static int category_token(int poi_index) { return kGlueCount + kBucketCount + poi_index; }
  /// Human-readable token, for debugging and tests.
  [[nodiscard]] static std::string token_text(int token, const data::PoiCatalog& catalog);
};

/// Lists the top_k non-zero categories by count (descending, ties by
/// ascending catalog id), e.g. "area with 12 restaurant, 5 shopping, 3
/// education points of interest". All-zero counts render as "area with no
/// recorded points of interest".
TextDescription poi_to_text(const Eigen::RowVectorXi& counts, const data::PoiCatalog& catalog, int top_k);

}  // namespace lsdm::env
