#pragma once

#include "lsdm/common/matrix.hpp"
#include "lsdm/common/random.hpp"

#include <cstring>
#include <filesystem>
#include <random>
#include <string>

namespace test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("lsdm-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline lsdm::Matrix random_matrix(lsdm::Index rows, lsdm::Index cols, std::uint64_t seed, double scale = 1.0) {
  lsdm::Rng rng(seed);
  lsdm::Matrix m(rows, cols);
  for (lsdm::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * lsdm::standard_normal(rng);
  return m;
}

inline bool bit_equal(const lsdm::Matrix& a, const lsdm::Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (lsdm::Index i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace test
