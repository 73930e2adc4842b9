#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/dataset.hpp"
#include "lsdm/data/normalizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lsdm::data {

/// A (history, target, context) unit: history rows [t - H, t), target rows
/// [t, t + horizon), context taken at the first target time t.
struct SampleWindow {
  std::size_t user_index = 0;
  std::string user_id;
  Index target_index = 0;     // row of the first target step
  std::int64_t target_time = 0;
  Matrix history;             // H x N, normalized
  Matrix target;              // horizon x N, normalized
  Eigen::RowVectorXi poi_at_target;
  RowVector tile_at_target;
};

/// Number of valid target starts for one user: max(0, M - H - horizon + 1).
[[nodiscard]] Index window_count(Index time_points, Index history_len, Index horizon);

/// One window per valid (user, t), ordered by user then t.
/// Throws ValidationError when no user has M >= history_len + horizon.
std::vector<SampleWindow> make_windows(const Dataset& dataset, const Normalizer& normalizer,
                                       Index history_len, Index horizon);

/// Builds the single window of `user` whose first target row is `target_index`.
SampleWindow window_at(const Dataset& dataset, const Normalizer& normalizer, std::size_t user,
                       Index target_index, Index history_len, Index horizon);

}  // namespace lsdm::data
