#include "lsdm/data/synthetic.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/random.hpp"

#include <cmath>
#include <cstdio>

namespace lsdm::data {

namespace {

// Service columns.
enum Service { kUtil, kGames, kEnt, kNews, kSocial, kTravel, kLife, kNav, kMusic, kPhoto };

struct Bump {
  double center;
  double width;
  double amplitude;
};

double circular_gap(double a, double b) {
  const double d = std::fabs(a - b);
  return std::min(d, 24.0 - d);
}

Matrix default_diurnal() {
  const std::vector<std::vector<Bump>> bumps = {
      /* Utilities */ {{10, 3.0, 0.8}, {15, 3.0, 0.6}},
      /* Games */ {{21, 2.0, 1.0}, {13, 1.5, 0.3}},
      /* Entertainment */ {{21, 2.0, 1.1}, {1, 1.5, 0.3}},
      /* News */ {{8, 1.5, 0.9}, {19, 1.5, 0.4}},
      /* Social */ {{12, 2.0, 0.6}, {21, 2.5, 0.8}},
      /* Travel */ {{10, 3.0, 0.6}, {17, 2.0, 0.4}},
      /* Lifestyle */ {{12, 1.2, 0.9}, {18, 1.2, 0.9}},
      /* Navigation */ {{8, 1.0, 1.0}, {18, 1.0, 1.0}},
      /* Music */ {{8, 1.2, 0.7}, {18, 1.2, 0.7}, {22, 2.0, 0.4}},
      /* Photo & Video */ {{15, 2.5, 0.7}, {20, 2.0, 0.5}},
  };
  Matrix d(kServiceCount, kHoursPerDay);
  for (int s = 0; s < kServiceCount; ++s) {
    for (int h = 0; h < kHoursPerDay; ++h) {
      // Night trough keeps every hour strictly positive.
      double v = 0.15;
      for (const auto& b : bumps[s]) {
        const double g = circular_gap(h, b.center) / b.width;
        v += b.amplitude * std::exp(-0.5 * g * g);
      }
      d(s, h) = v;
    }
  }
  return d;
}

std::vector<double> profile_vector(const std::vector<std::pair<int, double>>& entries) {
  std::vector<double> v(kPoiCategoryCount, 0.0);
  for (auto [id, count] : entries) v[id - 1] = count;
  return v;
}

RowVector sample_dirichlet(const RowVector& alpha, Rng& rng) {
  RowVector out(alpha.size());
  for (Index i = 0; i < alpha.size(); ++i) {
    std::gamma_distribution<double> gamma(alpha(i), 1.0);
    out(i) = gamma(rng);
  }
  out /= out.sum();
  return out;
}

std::string user_name(int u) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%03d", u);
  return buf;
}

}  // namespace

SyntheticConfig SyntheticConfig::defaults() {
  SyntheticConfig c;
  c.dirichlet_concentration.assign(kServiceCount, 40.0);
  c.diurnal_profiles = default_diurnal();
  // Ids follow the POI catalog: 1 Medical Care ... 17 Other.
  c.poi_profile_library = {
      {"business", profile_vector({{3, 25}, {14, 8}, {5, 4}, {2, 3}, {11, 3}, {4, 3}, {13, 2}, {17, 2}})},
      {"campus", profile_vector({{15, 20}, {7, 8}, {14, 6}, {8, 5}, {6, 4}, {4, 3}, {17, 2}})},
      {"commercial", profile_vector({{13, 20}, {14, 15}, {9, 8}, {5, 3}, {2, 3}, {6, 2}, {16, 2}, {17, 2}})},
      {"residential", profile_vector({{8, 25}, {4, 6}, {14, 5}, {13, 4}, {15, 3}, {1, 2}, {7, 2}, {17, 2}})},
  };
  return c;
}

void SyntheticConfig::validate() const {
  if (num_users < 1) throw ValidationError("synthetic.num_users must be >= 1");
  if (weeks < 1) throw ValidationError("synthetic.weeks must be >= 1");
  if (static_cast<int>(dirichlet_concentration.size()) != kServiceCount) {
    throw ValidationError("synthetic.dirichlet_concentration must have " + std::to_string(kServiceCount) + " entries");
  }
  for (double a : dirichlet_concentration) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("synthetic.dirichlet_concentration entries must be positive");
  }
  if (diurnal_profiles.rows() != kServiceCount || diurnal_profiles.cols() != kHoursPerDay) {
    throw ValidationError("synthetic.diurnal_profiles must be 10 x 24");
  }
  if (!diurnal_profiles.allFinite() || (diurnal_profiles.array() < 0.0).any()) {
    throw ValidationError("synthetic.diurnal_profiles entries must be finite and >= 0");
  }
  if (poi_profile_library.empty()) throw ValidationError("synthetic.poi_profile_library must not be empty");
  for (const auto& [name, v] : poi_profile_library) {
    if (static_cast<int>(v.size()) != kPoiCategoryCount) {
      throw ValidationError("POI profile '" + name + "' must have " + std::to_string(kPoiCategoryCount) + " entries");
    }
    for (double x : v) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("POI profile '" + name + "' has a negative entry");
    }
  }
  if (!(noise_level >= 0.0)) throw ValidationError("synthetic.noise_level must be >= 0");
  if (!(traffic_scale > 0.0)) throw ValidationError("synthetic.traffic_scale must be positive");
  if (!(poi_jitter >= 0.0) || !(tile_noise >= 0.0)) throw ValidationError("synthetic jitter/noise must be >= 0");
  if (!(visit_rate >= 0.0 && visit_rate <= 1.0)) throw ValidationError("synthetic.visit_rate must lie in [0, 1]");
  if (visit_min_hours < 1 || visit_max_hours < visit_min_hours) {
    throw ValidationError("synthetic visit durations must satisfy 1 <= min <= max");
  }
  if (tile_shape.height < 1 || tile_shape.width < 1 || tile_shape.channels < 1) {
    throw ValidationError("tile shape dimensions must be positive");
  }
}

const Matrix& poi_service_affinity() {
  static const Matrix affinity = [] {
    Matrix a = Matrix::Zero(kPoiCategoryCount, kServiceCount);
    auto set = [&a](int poi_id, std::initializer_list<int> services) {
      for (int s : services) a(poi_id - 1, s) = 1.0;
    };
    set(1, {kUtil, kNews});
    set(2, {kTravel, kNav, kEnt});
    set(3, {kUtil, kNews, kSocial, kNav});
    set(4, {kLife, kUtil});
    set(5, {kNav, kTravel, kMusic, kNews});
    set(6, {kPhoto, kSocial});
    set(7, {kMusic, kSocial});
    set(8, {kEnt, kGames, kMusic, kPhoto});
    set(9, {kEnt, kGames, kPhoto});
    set(10, {kPhoto, kTravel});
    set(11, {kUtil, kNews});
    set(12, {kUtil, kMusic});
    set(13, {kLife, kPhoto, kSocial});
    set(14, {kLife, kSocial});
    set(15, {kUtil, kSocial, kGames});
    set(16, {kPhoto, kTravel, kNav});
    a.row(16).setConstant(0.1);
    return a;
  }();
  return affinity;
}

RowVector service_tilt(const std::vector<double>& poi_profile) {
  RowVector share = RowVector::Zero(kPoiCategoryCount);
  double total = 0.0;
  for (int p = 0; p < kPoiCategoryCount; ++p) total += poi_profile.at(p);
  if (total > 0.0) {
    for (int p = 0; p < kPoiCategoryCount; ++p) share(p) = poi_profile[p] / total;
  }
  RowVector tilt = (share * poi_service_affinity()).array() * 2.0 + 0.25;
  return tilt / tilt.mean();
}

RowVector render_tile(const Eigen::RowVectorXi& counts, const TileShape& shape) {
  const int size = shape.size();
  // Fixed spatial pattern per POI category; independent of any dataset seed.
  static thread_local std::map<int, Matrix> cache;
  auto it = cache.find(size);
  if (it == cache.end()) {
    Rng rng(0x7117e5eedULL);
    Matrix basis(kPoiCategoryCount, size);
    for (Index i = 0; i < basis.size(); ++i) basis.data()[i] = standard_normal(rng);
    it = cache.emplace(size, std::move(basis)).first;
  }
  RowVector weights(kPoiCategoryCount);
  for (int p = 0; p < kPoiCategoryCount; ++p) weights(p) = std::log1p(static_cast<double>(counts(p)));
  return weights * it->second / 4.0;
}

SyntheticDataset generate_synthetic_with_truth(const SyntheticConfig& config) {
  config.validate();
  SyntheticDataset out;
  Dataset& ds = out.dataset;
  ds.tile_shape = config.tile_shape;
  ds.hours_per_week = kHoursPerWeek;

  std::vector<std::string> names;
  for (const auto& [name, _] : config.poi_profile_library) names.push_back(name);

  const Index m = static_cast<Index>(config.weeks) * kHoursPerWeek;
  const RowVector concentration =
      Eigen::Map<const RowVector>(config.dirichlet_concentration.data(), kServiceCount);

  for (int u = 0; u < config.num_users; ++u) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(u)));
    const std::string& profile = names[static_cast<std::size_t>(u) % names.size()];
    const auto& base = config.poi_profile_library.at(profile);

    RowVector alpha = concentration.array() * service_tilt(base).array();
    RowVector pref = sample_dirichlet(alpha, rng);

    const int home = static_cast<int>(static_cast<std::size_t>(u) % names.size());
    auto jittered = [&](const std::vector<double>& profile_counts) {
      std::vector<double> mean(kPoiCategoryCount);
      for (int p = 0; p < kPoiCategoryCount; ++p) {
        mean[p] = profile_counts[p] * std::exp(config.poi_jitter * standard_normal(rng));
      }
      return mean;
    };
    const std::vector<double> home_poi = jittered(base);
    std::vector<double> poi_mean = home_poi;
    RowVector multiplier = RowVector::Ones(kServiceCount);
    const RowVector home_tilt = service_tilt(base);
    int place = home;
    int visit_left = 0;
    std::vector<int> location(static_cast<std::size_t>(m));
    std::bernoulli_distribution visit_starts(config.visit_rate);
    std::uniform_int_distribution<int> visit_length(config.visit_min_hours, config.visit_max_hours);
    std::uniform_int_distribution<int> other_place(0, std::max(0, static_cast<int>(names.size()) - 2));

    UserRecord rec;
    const std::string id = user_name(u);
    rec.traffic.user_id = id;
    rec.traffic.start_time = 0;
    rec.traffic.values.resize(m, kServiceCount);
    rec.poi.user_id = id;
    rec.poi.counts.resize(m, kPoiCategoryCount);
    rec.images.user_id = id;
    rec.images.shape = config.tile_shape;
    rec.images.tiles.resize(m, config.tile_shape.size());

    for (Index t = 0; t < m; ++t) {
      const int hour = static_cast<int>(t % kHoursPerDay);
      if (visit_left > 0) {
        if (--visit_left == 0) {
          place = home;
          poi_mean = home_poi;
          multiplier.setOnes();
        }
      } else if (names.size() > 1 && config.visit_rate > 0.0 && visit_starts(rng)) {
        int other = other_place(rng);
        if (other >= home) ++other;
        place = other;
        visit_left = visit_length(rng);
        const auto& visited = config.poi_profile_library.at(names[static_cast<std::size_t>(other)]);
        poi_mean = jittered(visited);
        multiplier = service_tilt(visited).array() / home_tilt.array();
      }
      location[static_cast<std::size_t>(t)] = place;
      for (int s = 0; s < kServiceCount; ++s) {
        const double g = standard_normal(rng);
        const double v = config.traffic_scale * kServiceCount * pref(s) * multiplier(s) *
                         config.diurnal_profiles(s, hour) * (1.0 + config.noise_level * g);
        rec.traffic.values(t, s) = std::max(0.0, v);
      }
      for (int p = 0; p < kPoiCategoryCount; ++p) {
        if (poi_mean[p] > 0.0) {
          std::poisson_distribution<int> pois(poi_mean[p]);
          rec.poi.counts(t, p) = pois(rng);
        } else {
          rec.poi.counts(t, p) = 0;
        }
      }
      RowVector tile = render_tile(rec.poi.counts.row(t), config.tile_shape);
      for (Index i = 0; i < tile.size(); ++i) {
        const double v = tile(i) + config.tile_noise * standard_normal(rng);
        rec.images.tiles(t, i) = static_cast<double>(static_cast<float>(v));
      }
    }
    ds.users.push_back(std::move(rec));
    out.truth.profile.push_back(profile);
    out.truth.preference.push_back(pref);
    out.truth.location.push_back(std::move(location));
  }
  return out;
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  return generate_synthetic_with_truth(config).dataset;
}

}  // namespace lsdm::data
