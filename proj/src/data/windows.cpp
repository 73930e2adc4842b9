#include "lsdm/data/windows.hpp"

#include "lsdm/common/error.hpp"

namespace lsdm::data {

Index window_count(Index time_points, Index history_len, Index horizon) {
  return std::max<Index>(0, time_points - history_len - horizon + 1);
}

SampleWindow window_at(const Dataset& dataset, const Normalizer& normalizer, std::size_t user,
                       Index target_index, Index history_len, Index horizon) {
  const UserRecord& u = dataset.users.at(user);
  const Index m = u.time_points();
  if (history_len < 1 || horizon < 1) throw ValidationError("history_len and horizon must be >= 1");
  if (target_index < history_len || target_index + horizon > m) {
    throw ValidationError("window at t=" + std::to_string(target_index) + " does not fit user '" +
                          u.traffic.user_id + "' with M=" + std::to_string(m));
  }
  SampleWindow w;
  w.user_index = user;
  w.user_id = u.traffic.user_id;
  w.target_index = target_index;
  w.target_time = u.traffic.start_time + target_index;
  w.history = normalizer.apply(u.traffic.values.middleRows(target_index - history_len, history_len));
  w.target = normalizer.apply(u.traffic.values.middleRows(target_index, horizon));
  w.poi_at_target = u.poi.counts.row(target_index);
  w.tile_at_target = u.images.tiles.row(target_index);
  return w;
}

std::vector<SampleWindow> make_windows(const Dataset& dataset, const Normalizer& normalizer,
                                       Index history_len, Index horizon) {
  if (history_len < 1 || horizon < 1) throw ValidationError("history_len and horizon must be >= 1");
  std::vector<SampleWindow> windows;
  for (std::size_t u = 0; u < dataset.users.size(); ++u) {
    const Index m = dataset.users[u].time_points();
    for (Index t = history_len; t + horizon <= m; ++t) {
      windows.push_back(window_at(dataset, normalizer, u, t, history_len, horizon));
    }
  }
  if (windows.empty()) {
    throw ValidationError("no valid windows: history_len + horizon exceeds every user's time points");
  }
  return windows;
}

}  // namespace lsdm::data
