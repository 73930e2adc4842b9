#include "lsdm/data/catalog.hpp"

#include "lsdm/common/error.hpp"

#include <set>

namespace lsdm::data {

namespace {

template <typename Entry>
void validate_ids(const std::vector<Entry>& entries, int expected, const char* what) {
  if (static_cast<int>(entries.size()) != expected) {
    throw ValidationError(std::string(what) + " must have exactly " + std::to_string(expected) +
                          " entries, got " + std::to_string(entries.size()));
  }
  std::set<std::string> names;
  for (int i = 0; i < expected; ++i) {
    if (entries[i].id != i + 1) {
      throw ValidationError(std::string(what) + " ids must run 1.." + std::to_string(expected) +
                            " without gaps");
    }
    if (!names.insert(entries[i].name).second) {
      throw ValidationError(std::string(what) + " has duplicate name '" + entries[i].name + "'");
    }
  }
}

template <typename Entry>
int find_index(const std::vector<Entry>& entries, const std::string& name, const char* what) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return static_cast<int>(i);
  }
  throw ValidationError(std::string("unknown ") + what + " '" + name + "'");
}

}  // namespace

ServiceCatalog::ServiceCatalog(std::vector<ServiceEntry> entries) : entries_(std::move(entries)) {
  validate_ids(entries_, kServiceCount, "service catalog");
}

const ServiceCatalog& ServiceCatalog::standard() {
  static const ServiceCatalog catalog({
      {1, "Utilities", "General utilities for daily use"},
      {2, "Games", "Gaming applications"},
      {3, "Entertainment", "Streaming platforms, video apps"},
      {4, "News", "News applications for current affairs"},
      {5, "Social Networking", "Apps for social interactions like WeChat, LinkedIn, Weibo"},
      {6, "Travel", "Travel planning and booking applications"},
      {7, "Lifestyle", "Lifestyle-related apps like Meituan"},
      {8, "Navigation", "Navigation and GPS tools"},
      {9, "Music", "Music streaming platforms"},
      {10, "Photo & Video", "Photography and video editing apps"},
  });
  return catalog;
}

int ServiceCatalog::index_of(const std::string& name) const { return find_index(entries_, name, "service"); }

PoiCatalog::PoiCatalog(std::vector<PoiEntry> entries) : entries_(std::move(entries)) {
  validate_ids(entries_, kPoiCategoryCount, "POI catalog");
}

const PoiCatalog& PoiCatalog::standard() {
  static const PoiCatalog catalog({
      {1, "Medical Care"},  {2, "Hotel"},        {3, "Business"},      {4, "Life Service"},
      {5, "Transport Hub"}, {6, "Culture"},      {7, "Sports"},        {8, "Residence"},
      {9, "Entertainment"}, {10, "Scenic Spot"}, {11, "Government"},   {12, "Factory"},
      {13, "Shopping"},     {14, "Restaurant"},  {15, "Education"},    {16, "Landmark"},
      {17, "Other"},
  });
  return catalog;
}

int PoiCatalog::index_of(const std::string& name) const { return find_index(entries_, name, "POI category"); }

}  // namespace lsdm::data
