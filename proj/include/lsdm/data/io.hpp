#pragma once

#include "lsdm/data/dataset.hpp"

#include <filesystem>

namespace lsdm::data {

/// Reads a dataset manifest (JSON) and the per-user traffic CSV, POI CSV,
/// and tile files it references. Paths in the manifest are resolved
/// relative to the manifest's directory. Users are returned sorted by id.
///
/// Per-user files are parsed on up to LSDM_NUM_WORKERS threads.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json plus one traffic/POI/tile file per user into `dir`.
/// Traffic values are written with round-trip precision.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Parses a traffic CSV ("user_id,t,s1,...,s10"). Errors name file and line.
TrafficMatrix read_traffic_csv(const std::filesystem::path& path);
/// Parses a POI CSV ("user_id,t,p1,...,p17").
PoiSeries read_poi_csv(const std::filesystem::path& path);
/// Reads the "LSDT" tile container.
ImageFeatureSeries read_tiles(const std::filesystem::path& path, const TileShape& shape);

void write_traffic_csv(const TrafficMatrix& traffic, const std::filesystem::path& path);
void write_poi_csv(const PoiSeries& poi, const std::filesystem::path& path);
void write_tiles(const ImageFeatureSeries& images, const std::filesystem::path& path);

/// Worker cap from LSDM_NUM_WORKERS (default 1). Throws on invalid values.
int configured_workers();

}  // namespace lsdm::data
