#include "lsdm/denoiser/layout.hpp"

#include "lsdm/common/error.hpp"

namespace lsdm::denoiser {

TimeGroups to_time_groups(const Tensor4& x) {
  TimeGroups g{x.batch, x.services, {}};
  g.groups.reserve(static_cast<std::size_t>(x.batch * x.services));
  for (Index b = 0; b < x.batch; ++b) {
    for (Index k = 0; k < x.services; ++k) {
      Matrix m(x.channels, x.length);
      for (Index c = 0; c < x.channels; ++c) {
        for (Index l = 0; l < x.length; ++l) m(c, l) = x.at(b, c, k, l);
      }
      g.groups.push_back(std::move(m));
    }
  }
  return g;
}

Tensor4 from_time_groups(const TimeGroups& g) {
  if (static_cast<Index>(g.groups.size()) != g.batch * g.services || g.groups.empty()) {
    throw ShapeError("time groups do not match batch x services");
  }
  const Index c = g.groups.front().rows();
  const Index len = g.groups.front().cols();
  Tensor4 x(g.batch, c, g.services, len);
  for (Index b = 0; b < g.batch; ++b) {
    for (Index k = 0; k < g.services; ++k) {
      const Matrix& m = g.groups[static_cast<std::size_t>(b * g.services + k)];
      if (m.rows() != c || m.cols() != len) throw ShapeError("time groups have inconsistent shapes");
      for (Index ch = 0; ch < c; ++ch) {
        for (Index l = 0; l < len; ++l) x.at(b, ch, k, l) = m(ch, l);
      }
    }
  }
  return x;
}

FeatureGroups to_feature_groups(const Tensor4& x) {
  FeatureGroups g{x.batch, x.length, {}};
  g.groups.reserve(static_cast<std::size_t>(x.batch * x.length));
  for (Index b = 0; b < x.batch; ++b) {
    for (Index l = 0; l < x.length; ++l) {
      Matrix m(x.channels, x.services);
      for (Index c = 0; c < x.channels; ++c) {
        for (Index k = 0; k < x.services; ++k) m(c, k) = x.at(b, c, k, l);
      }
      g.groups.push_back(std::move(m));
    }
  }
  return g;
}

Tensor4 from_feature_groups(const FeatureGroups& g) {
  if (static_cast<Index>(g.groups.size()) != g.batch * g.length || g.groups.empty()) {
    throw ShapeError("feature groups do not match batch x length");
  }
  const Index c = g.groups.front().rows();
  const Index k_count = g.groups.front().cols();
  Tensor4 x(g.batch, c, k_count, g.length);
  for (Index b = 0; b < g.batch; ++b) {
    for (Index l = 0; l < g.length; ++l) {
      const Matrix& m = g.groups[static_cast<std::size_t>(b * g.length + l)];
      if (m.rows() != c || m.cols() != k_count) throw ShapeError("feature groups have inconsistent shapes");
      for (Index ch = 0; ch < c; ++ch) {
        for (Index k = 0; k < k_count; ++k) x.at(b, ch, k, l) = m(ch, k);
      }
    }
  }
  return x;
}

Matrix to_tokens(const Tensor4& x) {
  Matrix t(x.batch * x.services * x.length, x.channels);
  for (Index b = 0; b < x.batch; ++b) {
    for (Index c = 0; c < x.channels; ++c) {
      for (Index k = 0; k < x.services; ++k) {
        for (Index l = 0; l < x.length; ++l) t(time_row(b, k, l, x.services, x.length), c) = x.at(b, c, k, l);
      }
    }
  }
  return t;
}

Tensor4 from_tokens(const Matrix& tokens, Index batch, Index services, Index length) {
  if (tokens.rows() != batch * services * length) throw ShapeError("token count does not match B*K*L");
  Tensor4 x(batch, tokens.cols(), services, length);
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < tokens.cols(); ++c) {
      for (Index k = 0; k < services; ++k) {
        for (Index l = 0; l < length; ++l) x.at(b, c, k, l) = tokens(time_row(b, k, l, services, length), c);
      }
    }
  }
  return x;
}

std::vector<Index> time_to_feature_order(Index batch, Index services, Index length) {
  std::vector<Index> perm;
  perm.reserve(static_cast<std::size_t>(batch * services * length));
  for (Index b = 0; b < batch; ++b) {
    for (Index l = 0; l < length; ++l) {
      for (Index k = 0; k < services; ++k) perm.push_back(time_row(b, k, l, services, length));
    }
  }
  return perm;
}

std::vector<Index> feature_to_time_order(Index batch, Index services, Index length) {
  const auto fwd = time_to_feature_order(batch, services, length);
  std::vector<Index> inv(fwd.size());
  for (std::size_t j = 0; j < fwd.size(); ++j) inv[static_cast<std::size_t>(fwd[j])] = static_cast<Index>(j);
  return inv;
}

}  // namespace lsdm::denoiser
