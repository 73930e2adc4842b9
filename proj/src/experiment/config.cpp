#include "lsdm/experiment/config.hpp"

#include "lsdm/common/error.hpp"
#include "lsdm/common/files.hpp"
#include "lsdm/data/catalog.hpp"

#include <set>

namespace lsdm::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ValidationError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: '" + name(key) + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  [[nodiscard]] std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError("config: unknown key '" + name(it.key().c_str()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("config: " + message);
}

void read_synthetic(const json& j, data::SyntheticConfig& s) {
  Section sec(j, "data.synthetic");
  sec.read("num_users", s.num_users);
  sec.read("weeks", s.weeks);
  sec.read("seed", s.seed);
  sec.read("noise_level", s.noise_level);
  sec.read("dirichlet_concentration", s.dirichlet_concentration);
  if (const json* d = sec.child("diurnal_profiles")) {
    std::vector<std::vector<double>> rows;
    try {
      rows = d->get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
      throw ValidationError("config: 'data.synthetic.diurnal_profiles' must be a 10 x 24 array");
    }
    require(static_cast<int>(rows.size()) == data::kServiceCount, "'data.synthetic.diurnal_profiles' must have 10 rows");
    s.diurnal_profiles.resize(data::kServiceCount, data::kHoursPerDay);
    for (int r = 0; r < data::kServiceCount; ++r) {
      require(static_cast<int>(rows[r].size()) == data::kHoursPerDay,
              "'data.synthetic.diurnal_profiles' rows must have 24 entries");
      for (int c = 0; c < data::kHoursPerDay; ++c) s.diurnal_profiles(r, c) = rows[r][c];
    }
  }
  sec.read("poi_profile_library", s.poi_profile_library);
  sec.read("traffic_scale", s.traffic_scale);
  sec.read("poi_jitter", s.poi_jitter);
  sec.read("tile_noise", s.tile_noise);
  sec.read("visit_rate", s.visit_rate);
  sec.read("visit_min_hours", s.visit_min_hours);
  sec.read("visit_max_hours", s.visit_max_hours);
  if (const json* t = sec.child("tile_shape")) {
    std::vector<int> v;
    try {
      v = t->get<std::vector<int>>();
    } catch (const json::exception&) {
      v.clear();
    }
    require(v.size() == 3, "'data.synthetic.tile_shape' must be [h, w, c]");
    s.tile_shape = {v[0], v[1], v[2]};
  }
  sec.finish();
}

json synthetic_json(const data::SyntheticConfig& s) {
  std::vector<std::vector<double>> diurnal;
  for (Index r = 0; r < s.diurnal_profiles.rows(); ++r) {
    diurnal.emplace_back(s.diurnal_profiles.row(r).data(), s.diurnal_profiles.row(r).data() + s.diurnal_profiles.cols());
  }
  return {{"num_users", s.num_users},
          {"weeks", s.weeks},
          {"seed", s.seed},
          {"noise_level", s.noise_level},
          {"dirichlet_concentration", s.dirichlet_concentration},
          {"diurnal_profiles", diurnal},
          {"poi_profile_library", s.poi_profile_library},
          {"traffic_scale", s.traffic_scale},
          {"poi_jitter", s.poi_jitter},
          {"tile_noise", s.tile_noise},
          {"visit_rate", s.visit_rate},
          {"visit_min_hours", s.visit_min_hours},
          {"visit_max_hours", s.visit_max_hours},
          {"tile_shape", {s.tile_shape.height, s.tile_shape.width, s.tile_shape.channels}}};
}

}  // namespace

void RunConfig::sync_derived() {
  model.denoiser.services = data::kServiceCount;
  model.denoiser.window_len = data.horizon;
  model.denoiser.history_len = data.history_len;
  model.denoiser.env_dim = model.towers.embed_dim;
  model.towers.tile_shape = data.synthetic.tile_shape;
}

void RunConfig::validate() const {
  require(data.history_len >= 1, "'data.history_len' must be >= 1");
  require(data.horizon >= 1, "'data.horizon' must be >= 1");
  require(data.train_fraction > 0.0 && data.train_fraction < 1.0, "'data.train_fraction' must lie in (0, 1)");
  if (!data.manifest) data.synthetic.validate();
  model.denoiser.validate();
  require(model.towers.embed_dim >= 1 && model.towers.hidden_multiplier >= 1 && model.towers.token_dim >= 1,
          "tower widths must be positive");
  require(model.towers.initial_temperature > 0.0, "'model.towers.initial_temperature' must be positive");
  (void)diffusion::make_schedule(model.schedule.kind, model.schedule.steps, model.schedule.beta_min,
                                 model.schedule.beta_max);
  require(model.fusion.alpha >= 0.0 && model.fusion.beta >= 0.0, "fusion weights must be non-negative");
  try {
    diffusion::validate(model.loss);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config: 'model.loss': ") + e.what());
  }
  require(model.top_k >= 1 && model.top_k <= data::kPoiCategoryCount, "'model.top_k' must lie in [1, 17]");
  require(training.contrastive_epochs >= 0, "'training.contrastive_epochs' must be >= 0");
  require(training.contrastive_batch_size >= 2, "'training.contrastive_batch_size' must be >= 2");
  require(training.contrastive_learning_rate > 0.0, "'training.contrastive_learning_rate' must be positive");
  require(training.epochs >= 1, "'training.epochs' must be >= 1");
  require(training.batch_size >= 1, "'training.batch_size' must be >= 1");
  require(training.learning_rate > 0.0, "'training.learning_rate' must be positive");
  require(training.grad_clip >= 0.0, "'training.grad_clip' must be >= 0");
  require(training.checkpoint_every >= 0, "'training.checkpoint_every' must be >= 0");
  require(!evaluation.steps_list.empty(), "'evaluation.steps_list' must not be empty");
  for (int s : evaluation.steps_list) require(s >= 1, "'evaluation.steps_list' entries must be >= 1");
  require(evaluation.samples >= 1, "'evaluation.samples' must be >= 1");
  require(evaluation.windows_per_user >= 1, "'evaluation.windows_per_user' must be >= 1");
  require(evaluation.max_test_windows >= 0, "'evaluation.max_test_windows' must be >= 0");
}

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  Section root(j, "");
  if (const json* d = root.child("data")) {
    Section sec(*d, "data");
    std::string manifest;
    sec.read("manifest", manifest);
    if (!manifest.empty()) {
      fs::path p(manifest);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      if (!fs::exists(p)) throw ValidationError("config: 'data.manifest' path does not exist: " + p.string());
      c.data.manifest = fs::absolute(p).lexically_normal();
    }
    if (const json* s = sec.child("synthetic")) read_synthetic(*s, c.data.synthetic);
    sec.read("history_len", c.data.history_len);
    sec.read("horizon", c.data.horizon);
    sec.read("train_fraction", c.data.train_fraction);
    sec.finish();
  }
  if (const json* m = root.child("model")) {
    Section sec(*m, "model");
    if (const json* d = sec.child("denoiser")) {
      Section ds(*d, "model.denoiser");
      auto& dc = c.model.denoiser;
      ds.read("channel_width", dc.channel_width);
      ds.read("num_heads", dc.num_heads);
      ds.read("blocks", dc.blocks);
      ds.read("condition_dim", dc.condition_dim);
      ds.read("timestep_dim", dc.timestep_dim);
      ds.read("history_dim", dc.history_dim);
      ds.read("mlp_ratio", dc.mlp_ratio);
      ds.read("conditional", dc.conditional);
      ds.finish();
    }
    if (const json* t = sec.child("towers")) {
      Section ts(*t, "model.towers");
      auto& tc = c.model.towers;
      ts.read("embed_dim", tc.embed_dim);
      ts.read("hidden_multiplier", tc.hidden_multiplier);
      ts.read("token_dim", tc.token_dim);
      ts.read("max_positions", tc.max_positions);
      ts.read("initial_temperature", tc.initial_temperature);
      ts.finish();
    }
    if (const json* s = sec.child("schedule")) {
      Section ss(*s, "model.schedule");
      ss.read("kind", c.model.schedule.kind);
      ss.read("steps", c.model.schedule.steps);
      ss.read("beta_min", c.model.schedule.beta_min);
      ss.read("beta_max", c.model.schedule.beta_max);
      ss.finish();
    }
    if (const json* f = sec.child("fusion")) {
      Section fs_(*f, "model.fusion");
      fs_.read("alpha", c.model.fusion.alpha);
      fs_.read("beta", c.model.fusion.beta);
      fs_.finish();
    }
    if (const json* l = sec.child("loss")) {
      Section ls(*l, "model.loss");
      ls.read("lambda0", c.model.loss.epsilon);
      ls.read("lambda1", c.model.loss.mse);
      ls.read("lambda2", c.model.loss.cosine);
      ls.finish();
    }
    sec.read("top_k", c.model.top_k);
    sec.finish();
  }
  if (const json* t = root.child("training")) {
    Section sec(*t, "training");
    auto& tr = c.training;
    sec.read("seed", tr.seed);
    sec.read("contrastive_epochs", tr.contrastive_epochs);
    sec.read("contrastive_batch_size", tr.contrastive_batch_size);
    sec.read("contrastive_learning_rate", tr.contrastive_learning_rate);
    sec.read("epochs", tr.epochs);
    sec.read("batch_size", tr.batch_size);
    sec.read("learning_rate", tr.learning_rate);
    sec.read("grad_clip", tr.grad_clip);
    sec.read("joint", tr.joint);
    sec.read("checkpoint_every", tr.checkpoint_every);
    sec.finish();
  }
  if (const json* e = root.child("evaluation")) {
    Section sec(*e, "evaluation");
    auto& ev = c.evaluation;
    sec.read("steps_list", ev.steps_list);
    sec.read("samples", ev.samples);
    sec.read("windows_per_user", ev.windows_per_user);
    sec.read("max_test_windows", ev.max_test_windows);
    sec.read("seed", ev.seed);
    sec.read("raw_space", ev.raw_space);
    sec.finish();
  }
  root.finish();
  c.sync_derived();
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json data = {{"synthetic", synthetic_json(c.data.synthetic)},
               {"history_len", c.data.history_len},
               {"horizon", c.data.horizon},
               {"train_fraction", c.data.train_fraction}};
  if (c.data.manifest) data["manifest"] = c.data.manifest->string();
  const auto& d = c.model.denoiser;
  const auto& t = c.model.towers;
  json model = {
      {"denoiser",
       {{"channel_width", d.channel_width},
        {"num_heads", d.num_heads},
        {"blocks", d.blocks},
        {"condition_dim", d.condition_dim},
        {"timestep_dim", d.timestep_dim},
        {"history_dim", d.history_dim},
        {"mlp_ratio", d.mlp_ratio},
        {"conditional", d.conditional}}},
      {"towers",
       {{"embed_dim", t.embed_dim},
        {"hidden_multiplier", t.hidden_multiplier},
        {"token_dim", t.token_dim},
        {"max_positions", t.max_positions},
        {"initial_temperature", t.initial_temperature}}},
      {"schedule",
       {{"kind", c.model.schedule.kind},
        {"steps", c.model.schedule.steps},
        {"beta_min", c.model.schedule.beta_min},
        {"beta_max", c.model.schedule.beta_max}}},
      {"fusion", {{"alpha", c.model.fusion.alpha}, {"beta", c.model.fusion.beta}}},
      {"loss", {{"lambda0", c.model.loss.epsilon}, {"lambda1", c.model.loss.mse}, {"lambda2", c.model.loss.cosine}}},
      {"top_k", c.model.top_k}};
  const auto& tr = c.training;
  json training = {{"seed", tr.seed},
                   {"contrastive_epochs", tr.contrastive_epochs},
                   {"contrastive_batch_size", tr.contrastive_batch_size},
                   {"contrastive_learning_rate", tr.contrastive_learning_rate},
                   {"epochs", tr.epochs},
                   {"batch_size", tr.batch_size},
                   {"learning_rate", tr.learning_rate},
                   {"grad_clip", tr.grad_clip},
                   {"joint", tr.joint},
                   {"checkpoint_every", tr.checkpoint_every}};
  const auto& ev = c.evaluation;
  json evaluation = {{"steps_list", ev.steps_list},
                     {"samples", ev.samples},
                     {"windows_per_user", ev.windows_per_user},
                     {"max_test_windows", ev.max_test_windows},
                     {"seed", ev.seed},
                     {"raw_space", ev.raw_space}};
  return {{"data", data}, {"model", model}, {"training", training}, {"evaluation", evaluation}};
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

void save_config(const RunConfig& config, const fs::path& path) {
  write_text_file(path, to_json(config).dump(2) + "\n");
}

}  // namespace lsdm::experiment
