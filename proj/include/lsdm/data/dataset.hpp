#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/catalog.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lsdm::data {

struct TileShape {
  int height = 8;
  int width = 8;
  int channels = 3;

  [[nodiscard]] int size() const { return height * width * channels; }
  bool operator==(const TileShape&) const = default;
};

/// One user's hourly traffic: M time points by N services, in bytes.
struct TrafficMatrix {
  std::string user_id;
  std::int64_t start_time = 0;  // hour index of row 0
  Matrix values;
};

/// POI counts per time point: M x P non-negative integers.
struct PoiSeries {
  std::string user_id;
  IntMatrix counts;
};

/// One flattened (row, col, channel) tile per time point: M x (h*w*c).
struct ImageFeatureSeries {
  std::string user_id;
  TileShape shape;
  Matrix tiles;
};

struct UserRecord {
  TrafficMatrix traffic;
  PoiSeries poi;
  ImageFeatureSeries images;

  [[nodiscard]] Index time_points() const { return traffic.values.rows(); }
};

/// Aligned per-user triples. Immutable after construction by convention.
struct Dataset {
  std::vector<UserRecord> users;
  TileShape tile_shape;
  int hours_per_week = kHoursPerWeek;

  [[nodiscard]] bool empty() const { return users.empty(); }
  [[nodiscard]] const UserRecord& user(const std::string& user_id) const;
};

/// Checks every per-user invariant (shapes, alignment, value domains).
/// Throws ValidationError naming the offending user and quantity.
void validate(const Dataset& dataset);

}  // namespace lsdm::data
