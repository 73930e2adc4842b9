#include "lsdm/env/text.hpp"

#include "lsdm/common/error.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

namespace lsdm::env {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

int Vocabulary::bucket_of(int count) {
  if (count <= 0) return 0;
  if (count <= 2) return 1;
  if (count <= 5) return 2;
  if (count <= 10) return 3;
  return 4;
}

std::string Vocabulary::token_text(int token, const data::PoiCatalog& catalog) {
  static const char* kGlue[] = {"area", "with", "no", "recorded", "points", "of", "interest", ","};
  static const char* kBuckets[] = {"<0>", "<1-2>", "<3-5>", "<6-10>", "<11+>"};
  if (token < 0 || token >= size()) throw ValidationError("token id out of range");
  if (token < kGlueCount) return kGlue[token];
  if (token < kGlueCount + kBucketCount) return kBuckets[token - kGlueCount];
  return lower(catalog.name(token - kGlueCount - kBucketCount));
}

TextDescription poi_to_text(const Eigen::RowVectorXi& counts, const data::PoiCatalog& catalog, int top_k) {
  const int p = catalog.size();
  if (counts.size() != p) throw ShapeError("POI count vector must have " + std::to_string(p) + " entries");
  if (top_k < 1 || top_k > p) throw ValidationError("top_k must lie in [1, " + std::to_string(p) + "]");
  if ((counts.array() < 0).any()) throw ValidationError("POI counts must be non-negative");

  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (counts(a) != counts(b)) return counts(a) > counts(b);
    return a < b;
  });

  TextDescription d;
  d.token_ids = {Vocabulary::kArea, Vocabulary::kWith};
  d.text = "area with ";
  int listed = 0;
  for (int idx : order) {
    if (listed == top_k || counts(idx) == 0) break;
    if (listed > 0) {
      d.text += ", ";
      d.token_ids.push_back(Vocabulary::kComma);
    }
    d.text += std::to_string(counts(idx)) + " " + lower(catalog.name(idx));
    d.token_ids.push_back(Vocabulary::bucket_token(counts(idx)));
    d.token_ids.push_back(Vocabulary::category_token(idx));
    ++listed;
  }
  if (listed == 0) {
    d.text += "no recorded ";
    d.token_ids.push_back(Vocabulary::kNo);
    d.token_ids.push_back(Vocabulary::kRecorded);
  } else {
    d.text += " ";
  }
  d.text += "points of interest";
  d.token_ids.insert(d.token_ids.end(), {Vocabulary::kPoints, Vocabulary::kOf, Vocabulary::kInterest});
  return d;
}

}  // namespace lsdm::env
