#include "lsdm/forecast/model.hpp"

#include "lsdm/common/error.hpp"

namespace lsdm::forecast {

Matrix LsdmModel::condition_inputs(std::span<const Matrix> histories, std::span<const Context> contexts) const {
  if (histories.size() != contexts.size()) throw ShapeError("one context per history required");
  const auto& cfg = denoiser.config();
  const Index hist = static_cast<Index>(cfg.history_len) * cfg.services;
  Matrix out(static_cast<Index>(histories.size()), cfg.condition_input_width());
  std::vector<Eigen::RowVectorXi> pois;
  Matrix tiles(static_cast<Index>(contexts.size()), towers.config().tile_shape.size());
  for (std::size_t i = 0; i < histories.size(); ++i) {
    const Matrix& h = histories[i];
    if (h.rows() != cfg.history_len || h.cols() != cfg.services) {
      throw ShapeError("history window is " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                       ", model expects " + std::to_string(cfg.history_len) + "x" + std::to_string(cfg.services));
    }
    out.row(static_cast<Index>(i)).head(hist) = h.reshaped<Eigen::RowMajor>().transpose();
    if (contexts[i].tile.size() != tiles.cols()) throw ShapeError("context tile has the wrong size");
    tiles.row(static_cast<Index>(i)) = contexts[i].tile;
    pois.push_back(contexts[i].poi);
  }
  if (cfg.env_dim > 0) {
    if (cfg.conditional) {
      out.rightCols(cfg.env_dim) = env::embed_contexts(pois, tiles, towers, fusion, top_k);
    } else {
      out.rightCols(cfg.env_dim).setZero();
    }
  }
  return out;
}

Matrix LsdmModel::condition_inputs(std::span<const data::SampleWindow> windows) const {
  std::vector<Matrix> histories;
  std::vector<Context> contexts;
  histories.reserve(windows.size());
  contexts.reserve(windows.size());
  for (const auto& w : windows) {
    histories.push_back(w.history);
    contexts.push_back({w.poi_at_target, w.tile_at_target});
  }
  return condition_inputs(histories, contexts);
}

}  // namespace lsdm::forecast
