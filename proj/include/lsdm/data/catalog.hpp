#pragma once

#include <string>
#include <vector>

namespace lsdm::data {

inline constexpr int kServiceCount = 10;
inline constexpr int kPoiCategoryCount = 17;
inline constexpr int kHoursPerWeek = 168;
inline constexpr int kHoursPerDay = 24;

struct ServiceEntry {
  int id;
  std::string name;
  std::string description;
};

/// The ten app/service categories traffic is broken down into.
class ServiceCatalog {
 public:
  explicit ServiceCatalog(std::vector<ServiceEntry> entries);

  static const ServiceCatalog& standard();

  [[nodiscard]] const std::vector<ServiceEntry>& entries() const { return entries_; }
  [[nodiscard]] int size() const { return static_cast<int>(entries_.size()); }
  /// Name of the service at 0-based column `index`.
  [[nodiscard]] const std::string& name(int index) const { return entries_.at(index).name; }
  /// 0-based column of the named service; throws on unknown names.
  [[nodiscard]] int index_of(const std::string& name) const;

 private:
  std::vector<ServiceEntry> entries_;
};

struct PoiEntry {
  int id;
  std::string name;
};

/// The seventeen point-of-interest categories.
class PoiCatalog {
 public:
  explicit PoiCatalog(std::vector<PoiEntry> entries);

  static const PoiCatalog& standard();

  [[nodiscard]] const std::vector<PoiEntry>& entries() const { return entries_; }
  [[nodiscard]] int size() const { return static_cast<int>(entries_.size()); }
  [[nodiscard]] const std::string& name(int index) const { return entries_.at(index).name; }
  [[nodiscard]] int index_of(const std::string& name) const;

 private:
  std::vector<PoiEntry> entries_;
};

}  // namespace lsdm::data
