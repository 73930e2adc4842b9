#include "lsdm/data/dataset.hpp"

#include "lsdm/common/error.hpp"

#include <cmath>
#include <set>

namespace lsdm::data {

const UserRecord& Dataset::user(const std::string& user_id) const {
  for (const auto& u : users) {
    if (u.traffic.user_id == user_id) return u;
  }
  throw ValidationError("unknown user '" + user_id + "'");
}

void validate(const Dataset& dataset) {
  std::set<std::string> seen;
  for (const auto& u : dataset.users) {
    const std::string& id = u.traffic.user_id;
    if (!seen.insert(id).second) throw ValidationError("duplicate user id '" + id + "'");
    if (u.poi.user_id != id || u.images.user_id != id) {
      throw ValidationError("user id mismatch within the record of '" + id + "'");
    }
    const Index m = u.traffic.values.rows();
    if (m < 1) throw ValidationError("user '" + id + "' has no time points");
    if (u.traffic.values.cols() != kServiceCount) {
      throw ValidationError("user '" + id + "' traffic has " + std::to_string(u.traffic.values.cols()) +
                            " services, expected " + std::to_string(kServiceCount));
    }
    if (u.poi.counts.rows() != m) {
      throw ValidationError("user '" + id + "': POI rows (" + std::to_string(u.poi.counts.rows()) +
                            ") do not match traffic rows (" + std::to_string(m) + ")");
    }
    if (u.images.tiles.rows() != m) {
      throw ValidationError("user '" + id + "': tile count (" + std::to_string(u.images.tiles.rows()) +
                            ") does not match traffic rows (" + std::to_string(m) + ")");
    }
    if (u.poi.counts.cols() != kPoiCategoryCount) {
      throw ValidationError("user '" + id + "' POI series has the wrong category count");
    }
    if (!(u.images.shape == dataset.tile_shape) || u.images.tiles.cols() != dataset.tile_shape.size()) {
      throw ValidationError("user '" + id + "' tiles do not match the dataset tile shape");
    }
    for (Index t = 0; t < m; ++t) {
      for (Index s = 0; s < kServiceCount; ++s) {
        const double v = u.traffic.values(t, s);
        if (!std::isfinite(v) || v < 0.0) {
          throw ValidationError("user '" + id + "' t=" + std::to_string(t) + ": traffic value " +
                                std::to_string(v) + " is not a finite non-negative number");
        }
      }
    }
    if ((u.poi.counts.array() < 0).any()) throw ValidationError("user '" + id + "' has negative POI counts");
    if (!u.images.tiles.allFinite()) throw ValidationError("user '" + id + "' has non-finite tile entries");
  }
}

}  // namespace lsdm::data
