#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/data/dataset.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lsdm::data {

/// Generator settings for synthetic traces with known conditional structure.
///
/// Each user is assigned a POI profile (round-robin over the library, in
/// name order). The profile tilts a Dirichlet over service preferences, so
/// the environment context carries information about the traffic mix.
struct SyntheticConfig {
  int num_users = 24;
  int weeks = 2;
  std::vector<double> dirichlet_concentration;  // N entries
  Matrix diurnal_profiles;                      // N x 24
  std::map<std::string, std::vector<double>> poi_profile_library;  // name -> P mean counts
  double noise_level = 0.2;
  std::uint64_t seed = 0;
  double traffic_scale = 1.0e5;
  double poi_jitter = 0.3;   // user-level log-normal spread of POI means
  double tile_noise = 0.05;
  // Short visits to places of another profile. While away, the POI context
  // follows the visited profile and the service mix is multiplied by
  // tilt(visited) / tilt(home). A rate of 0 keeps every user at home.
  double visit_rate = 0.08;  // chance per home hour that a visit starts
  int visit_min_hours = 2;
  int visit_max_hours = 6;
  TileShape tile_shape;

  /// Documented defaults: four profiles, smooth diurnal bumps, concentration 40.
  static SyntheticConfig defaults();
  void validate() const;
};

/// Default POI -> service affinity used to tilt preferences (P x N).
const Matrix& poi_service_affinity();

/// Mean-one tilt over services induced by a POI count vector.
RowVector service_tilt(const std::vector<double>& poi_profile);

/// Deterministic tile rendering for a POI count vector (before noise).
RowVector render_tile(const Eigen::RowVectorXi& counts, const TileShape& shape);

struct SyntheticTruth {
  std::vector<std::string> profile;   // per user
  std::vector<RowVector> preference;  // per user, N entries summing to 1
  std::vector<std::vector<int>> location;  // per user and time: profile index in name order
};

struct SyntheticDataset {
  Dataset dataset;
  SyntheticTruth truth;
};

/// Pure function of the config (seed included).
SyntheticDataset generate_synthetic_with_truth(const SyntheticConfig& config);
Dataset generate_synthetic(const SyntheticConfig& config);

}  // namespace lsdm::data
