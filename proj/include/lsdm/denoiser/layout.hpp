#pragma once

// Index bookkeeping between the B x C x K x L tensor view of the denoiser and
// the token matrices the layers operate on. A token matrix has one row per
// (b, k, l) position and C columns.

#include "lsdm/common/matrix.hpp"

#include <vector>

namespace lsdm::denoiser {

/// Dense B x C x K x L array in (b, c, k, l) order.
struct Tensor4 {
  Index batch = 0;
  Index channels = 0;
  Index services = 0;
  Index length = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(Index b, Index c, Index k, Index l) : batch(b), channels(c), services(k), length(l), data(b * c * k * l) {}

  [[nodiscard]] double& at(Index b, Index c, Index k, Index l) {
    return data[static_cast<std::size_t>(((b * channels + c) * services + k) * length + l)];
  }
  [[nodiscard]] double at(Index b, Index c, Index k, Index l) const {
    return data[static_cast<std::size_t>(((b * channels + c) * services + k) * length + l)];
  }
  bool operator==(const Tensor4&) const = default;
};

/// (B*K) x C x L, rows grouped for attention along L.
struct TimeGroups {
  Index batch = 0;
  Index services = 0;
  std::vector<Matrix> groups;  // B*K matrices of shape C x L
};

/// (B*L) x C x K, rows grouped for attention along K.
struct FeatureGroups {
  Index batch = 0;
  Index length = 0;
  std::vector<Matrix> groups;  // B*L matrices of shape C x K
};

TimeGroups to_time_groups(const Tensor4& x);
Tensor4 from_time_groups(const TimeGroups& g);
FeatureGroups to_feature_groups(const Tensor4& x);
Tensor4 from_feature_groups(const FeatureGroups& g);

/// Token rows in (b, k, l) order.
Matrix to_tokens(const Tensor4& x);
Tensor4 from_tokens(const Matrix& tokens, Index batch, Index services, Index length);

/// Row index of token (b, k, l) in time order.
inline Index time_row(Index b, Index k, Index l, Index services, Index length) {
  return (b * services + k) * length + l;
}

/// perm[j] = time-order row of the j-th token in (b, l, k) order.
std::vector<Index> time_to_feature_order(Index batch, Index services, Index length);
/// Inverse of time_to_feature_order.
std::vector<Index> feature_to_time_order(Index batch, Index services, Index length);

}  // namespace lsdm::denoiser
