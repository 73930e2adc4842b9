#include "lsdm/data/io.hpp"

#include "lsdm/common/binary.hpp"
#include "lsdm/common/error.hpp"
#include "lsdm/common/files.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <thread>

namespace lsdm::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kTileMagic = 0x5444534cU;  // "LSDT" little-endian

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line) + ": ";
}

double parse_double(std::string_view s, const fs::path& path, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError(where(path, line) + "malformed number '" + std::string(s) + "'");
  }
  return v;
}

long long parse_integer(std::string_view s, const fs::path& path, std::size_t line, const char* what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError(where(path, line) + what + " '" + std::string(s) + "' is not an integer");
  }
  return v;
}

std::string expected_header(char prefix, int count) {
  std::string h = "user_id,t";
  for (int i = 1; i <= count; ++i) h += "," + std::string(1, prefix) + std::to_string(i);
  return h;
}

struct CsvRows {
  std::string user_id;
  std::int64_t start_time = 0;
  std::vector<std::vector<std::string_view>> fields;
  std::vector<std::size_t> line_numbers;
  std::string text;  // owns the views
};

CsvRows read_csv_rows(const fs::path& path, char prefix, int columns) {
  CsvRows rows;
  rows.text = read_text_file(path);
  std::string_view all(rows.text);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  const std::string header = expected_header(prefix, columns);
  while (pos <= all.size()) {
    const std::size_t nl = all.find('\n', pos);
    std::string_view line = trim(all.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = (nl == std::string_view::npos) ? all.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      std::string compact;
      for (char c : line) {
        if (c != ' ') compact.push_back(c);
      }
      if (compact != header) {
        throw ValidationError(where(path, line_no) + "expected header '" + header + "'");
      }
      header_seen = true;
      continue;
    }
    auto f = split_csv(line);
    if (static_cast<int>(f.size()) != columns + 2) {
      throw ValidationError(where(path, line_no) + "malformed row: expected " + std::to_string(columns + 2) +
                            " fields, got " + std::to_string(f.size()));
    }
    const long long t = parse_integer(f[1], path, line_no, "time index");
    if (rows.fields.empty()) {
      rows.user_id = std::string(f[0]);
      rows.start_time = t;
    } else {
      if (f[0] != rows.user_id) {
        throw ValidationError(where(path, line_no) + "user id '" + std::string(f[0]) + "' differs from '" +
                              rows.user_id + "'");
      }
      const auto expected = rows.start_time + static_cast<std::int64_t>(rows.fields.size());
      if (t != expected) {
        throw ValidationError(where(path, line_no) + "time index " + std::to_string(t) + " breaks the hourly sequence (expected " +
                              std::to_string(expected) + ")");
      }
    }
    rows.fields.push_back(std::move(f));
    rows.line_numbers.push_back(line_no);
  }
  if (!header_seen) throw ValidationError(path.filename().string() + ": empty file");
  if (rows.fields.empty()) throw ValidationError(path.filename().string() + ": no data rows");
  return rows;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int configured_workers() {
  const char* env = std::getenv("LSDM_NUM_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  std::string_view s(env);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 1) {
    throw ValidationError("LSDM_NUM_WORKERS must be an integer >= 1, got '" + std::string(s) + "'");
  }
  return v;
}

TrafficMatrix read_traffic_csv(const fs::path& path) {
  CsvRows rows = read_csv_rows(path, 's', kServiceCount);
  TrafficMatrix tm;
  tm.user_id = rows.user_id;
  tm.start_time = rows.start_time;
  tm.values.resize(static_cast<Index>(rows.fields.size()), kServiceCount);
  for (std::size_t r = 0; r < rows.fields.size(); ++r) {
    for (int s = 0; s < kServiceCount; ++s) {
      const double v = parse_double(rows.fields[r][2 + s], path, rows.line_numbers[r]);
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError(where(path, rows.line_numbers[r]) + "traffic value " + std::string(rows.fields[r][2 + s]) +
                              " for s" + std::to_string(s + 1) + " must be a finite non-negative number");
      }
      tm.values(static_cast<Index>(r), s) = v;
    }
  }
  return tm;
}

PoiSeries read_poi_csv(const fs::path& path) {
  CsvRows rows = read_csv_rows(path, 'p', kPoiCategoryCount);
  PoiSeries ps;
  ps.user_id = rows.user_id;
  ps.counts.resize(static_cast<Index>(rows.fields.size()), kPoiCategoryCount);
  for (std::size_t r = 0; r < rows.fields.size(); ++r) {
    for (int p = 0; p < kPoiCategoryCount; ++p) {
      const long long v = parse_integer(rows.fields[r][2 + p], path, rows.line_numbers[r], "POI count");
      if (v < 0 || v > 1'000'000'000LL) {
        throw ValidationError(where(path, rows.line_numbers[r]) + "POI count for p" + std::to_string(p + 1) +
                              " must be a non-negative integer");
      }
      ps.counts(static_cast<Index>(r), p) = static_cast<int>(v);
    }
  }
  return ps;
}

ImageFeatureSeries read_tiles(const fs::path& path, const TileShape& shape) {
  const auto bytes = read_binary_file(path);
  if (bytes.size() < 16) throw ValidationError(path.filename().string() + ": truncated tile header");
  if (binary::get_u32(bytes, 0) != kTileMagic) throw ValidationError(path.filename().string() + ": bad magic, expected LSDT");
  const std::uint32_t m = binary::get_u32(bytes, 4);
  const std::uint32_t per_tile = binary::get_u32(bytes, 8);
  if (binary::get_u32(bytes, 12) != 0) throw ValidationError(path.filename().string() + ": reserved header bytes must be zero");
  if (static_cast<int>(per_tile) != shape.size()) {
    throw ValidationError(path.filename().string() + ": tile size " + std::to_string(per_tile) +
                          " does not match configured shape (" + std::to_string(shape.size()) + ")");
  }
  const std::size_t expected = 16 + static_cast<std::size_t>(m) * per_tile * 4;
  if (bytes.size() != expected) {
    throw ValidationError(path.filename().string() + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()));
  }
  ImageFeatureSeries images;
  images.shape = shape;
  images.tiles.resize(m, per_tile);
  std::size_t off = 16;
  for (std::uint32_t t = 0; t < m; ++t) {
    for (std::uint32_t i = 0; i < per_tile; ++i, off += 4) {
      const float f = binary::get_f32(bytes, off);
      if (!std::isfinite(f)) throw ValidationError(path.filename().string() + ": non-finite tile entry");
      images.tiles(t, i) = static_cast<double>(f);
    }
  }
  return images;
}

void write_traffic_csv(const TrafficMatrix& traffic, const fs::path& path) {
  std::ostringstream out;
  out << expected_header('s', kServiceCount) << '\n';
  for (Index t = 0; t < traffic.values.rows(); ++t) {
    out << traffic.user_id << ',' << (traffic.start_time + t);
    for (Index s = 0; s < traffic.values.cols(); ++s) out << ',' << format_double(traffic.values(t, s));
    out << '\n';
  }
  write_text_file(path, out.str());
}

void write_poi_csv(const PoiSeries& poi, const fs::path& path) {
  std::ostringstream out;
  out << expected_header('p', kPoiCategoryCount) << '\n';
  for (Index t = 0; t < poi.counts.rows(); ++t) {
    out << poi.user_id << ',' << t;
    for (Index p = 0; p < poi.counts.cols(); ++p) out << ',' << poi.counts(t, p);
    out << '\n';
  }
  write_text_file(path, out.str());
}

void write_tiles(const ImageFeatureSeries& images, const fs::path& path) {
  std::vector<unsigned char> bytes;
  bytes.reserve(16 + static_cast<std::size_t>(images.tiles.size()) * 4);
  binary::put_u32(bytes, kTileMagic);
  binary::put_u32(bytes, static_cast<std::uint32_t>(images.tiles.rows()));
  binary::put_u32(bytes, static_cast<std::uint32_t>(images.tiles.cols()));
  binary::put_u32(bytes, 0);
  for (Index i = 0; i < images.tiles.size(); ++i) binary::put_f32(bytes, static_cast<float>(images.tiles.data()[i]));
  write_binary_file(path, bytes);
}

Dataset load_dataset(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw IoError("manifest not found: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw ValidationError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (manifest.at("version").get<int>() != 1) throw VersionError("unsupported manifest version");
    if (manifest.value("services", kServiceCount) != kServiceCount) {
      throw ValidationError("manifest declares " + manifest.at("services").dump() + " services; only 10 are supported");
    }
    if (manifest.value("poi_categories", kPoiCategoryCount) != kPoiCategoryCount) {
      throw ValidationError("manifest declares an unsupported POI category count");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }

  Dataset ds;
  ds.hours_per_week = manifest.value("hours_per_week", kHoursPerWeek);
  if (manifest.contains("tile_shape")) {
    const auto& ts = manifest["tile_shape"];
    if (!ts.is_array() || ts.size() != 3) throw ValidationError("manifest tile_shape must be [h, w, c]");
    ds.tile_shape = {ts[0].get<int>(), ts[1].get<int>(), ts[2].get<int>()};
    if (ds.tile_shape.height < 1 || ds.tile_shape.width < 1 || ds.tile_shape.channels < 1) {
      throw ValidationError("manifest tile_shape entries must be positive");
    }
  }

  struct Entry {
    std::string user_id;
    fs::path traffic, poi, tiles;
  };
  std::vector<Entry> entries;
  const fs::path base = manifest_path.parent_path();
  if (!manifest.contains("users") || !manifest["users"].is_array()) throw ValidationError("manifest must list users");
  for (const auto& u : manifest["users"]) {
    try {
      entries.push_back({u.at("user_id").get<std::string>(), base / u.at("traffic_csv").get<std::string>(),
                         base / u.at("poi_csv").get<std::string>(), base / u.at("tiles_bin").get<std::string>()});
    } catch (const json::exception& e) {
      throw ValidationError(std::string("manifest user entry: ") + e.what());
    }
  }
  for (const auto& e : entries) {
    for (const auto& p : {e.traffic, e.poi, e.tiles}) {
      if (!fs::exists(p)) throw IoError("missing file for user '" + e.user_id + "': " + p.string());
    }
  }

  std::vector<UserRecord> records(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  auto load_one = [&](std::size_t i) {
    try {
      UserRecord rec;
      rec.traffic = read_traffic_csv(entries[i].traffic);
      rec.poi = read_poi_csv(entries[i].poi);
      rec.images = read_tiles(entries[i].tiles, ds.tile_shape);
      rec.images.user_id = entries[i].user_id;
      const auto m = rec.traffic.values.rows();
      if (rec.traffic.user_id != entries[i].user_id || rec.poi.user_id != entries[i].user_id) {
        throw ValidationError("user '" + entries[i].user_id + "': CSV user ids do not match the manifest");
      }
      if (rec.poi.counts.rows() != m) {
        throw ValidationError("user '" + entries[i].user_id + "': POI file has " + std::to_string(rec.poi.counts.rows()) +
                              " rows but traffic file has " + std::to_string(m) + " rows");
      }
      if (rec.images.tiles.rows() != m) {
        throw ValidationError("user '" + entries[i].user_id + "': tile file has " +
                              std::to_string(rec.images.tiles.rows()) + " tiles but traffic file has " +
                              std::to_string(m) + " rows");
      }
      records[i] = std::move(rec);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(configured_workers()), entries.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < entries.size(); ++i) load_one(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < entries.size(); i += workers) load_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::sort(records.begin(), records.end(),
            [](const UserRecord& a, const UserRecord& b) { return a.traffic.user_id < b.traffic.user_id; });
  ds.users = std::move(records);
  validate(ds);
  return ds;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  json users = json::array();
  for (const auto& u : dataset.users) {
    const std::string& id = u.traffic.user_id;
    const std::string traffic = "traffic_" + id + ".csv";
    const std::string poi = "poi_" + id + ".csv";
    const std::string tiles = "tiles_" + id + ".bin";
    write_traffic_csv(u.traffic, dir / traffic);
    write_poi_csv(u.poi, dir / poi);
    write_tiles(u.images, dir / tiles);
    users.push_back({{"user_id", id}, {"traffic_csv", traffic}, {"poi_csv", poi}, {"tiles_bin", tiles}});
  }
  json manifest = {{"version", 1},
                   {"users", users},
                   {"hours_per_week", dataset.hours_per_week},
                   {"services", kServiceCount},
                   {"poi_categories", kPoiCategoryCount},
                   {"tile_shape", {dataset.tile_shape.height, dataset.tile_shape.width, dataset.tile_shape.channels}}};
  const fs::path path = dir / "manifest.json";
  write_text_file(path, manifest.dump(2) + "\n");
  return path;
}

}  // namespace lsdm::data
