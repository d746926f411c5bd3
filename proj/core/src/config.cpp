#include "siml/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "siml/error.hpp"

namespace siml::config {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(Errc::invalid_config, "config: " + path + ": " + what);
}

/// One JSON object being consumed.  Every key that is read gets marked; any
/// key left over at finish() is unknown and rejected.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      fail(path_, "must be an object");
    }
  }

  const json* find(const char* key) {
    const auto it = node_.find(key);
    if (it == node_.end()) {
      return nullptr;
    }
    taken_.insert(key);
    return &*it;
  }

  void get_double(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(path_ + "." + key, "must be a number");
      out = v->get<double>();
    }
  }

  void get_int(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(path_ + "." + key, "must be an integer");
      const auto wide = v->get<std::int64_t>();
      if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
        fail(path_ + "." + key, "out of range");
      }
      out = static_cast<int>(wide);
    }
  }

  void get_size(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(path_ + "." + key, "must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void get_u64(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(path_ + "." + key, "must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void get_bool(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(path_ + "." + key, "must be true or false");
      out = v->get<bool>();
    }
  }

  void get_string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(path_ + "." + key, "must be a string");
      out = v->get<std::string>();
    }
  }

  const std::string& path() const { return path_; }

  void finish() {
    for (const auto& item : node_.items()) {
      if (!taken_.count(item.key())) {
        fail(path_, "unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> taken_;
};

void parse_data(const json& node, synthdata::DatasetConfig& out) {
  Section s(node, "data");
  s.get_int("num_identities", out.num_identities);
  s.get_int("num_scenes", out.num_scenes);
  s.get_int("min_per_scene", out.min_per_scene);
  s.get_int("max_per_scene", out.max_per_scene);
  s.get_int("scene_height", out.scene_height);
  s.get_int("scene_width", out.scene_width);
  s.get_int("canonical_height", out.canonical_height);
  s.get_int("canonical_width", out.canonical_width);
  s.get_double("scale_min", out.scale_min);
  s.get_double("scale_max", out.scale_max);
  s.get_double("noise_level", out.noise_level);
  s.get_u64("seed", out.seed);
  s.finish();
}

void parse_encoder(const json& node, encoder::EncoderConfig& out) {
  Section s(node, "encoder");
  s.get_int("dim", out.dim);
  s.get_int("grid_h", out.grid_h);
  s.get_int("grid_w", out.grid_w);
  s.finish();
}

void parse_losses(const json& node, silloss::SilConfig& sil, dmlloss::DmlConfig& dml) {
  Section s(node, "losses");
  s.get_double("margin", sil.margin);
  s.get_double("gamma", sil.gamma);
  s.get_double("delta", dml.delta);
  s.get_double("tau", dml.tau);
  s.finish();
}

void parse_threshold(const json& node, labeler::ThresholdConfig& out) {
  Section s(node, "threshold");
  s.get_double("start", out.start);
  s.get_double("amplitude", out.amplitude);
  s.get_double("decay", out.decay);
  s.finish();
}

void parse_dbscan(const json& node, labeler::DbscanConfig& out) {
  Section s(node, "dbscan");
  s.get_double("eps", out.eps);
  s.get_size("min_pts", out.min_pts);
  s.finish();
}

void parse_sgd(const json& node, encoder::SgdConfig& out) {
  Section s(node, "trainer.sgd");
  s.get_double("learning_rate", out.learning_rate);
  s.get_double("momentum", out.momentum);
  s.get_double("weight_decay", out.weight_decay);
  if (const json* v = s.find("decay_epochs")) {
    if (!v->is_array()) fail("trainer.sgd.decay_epochs", "must be an array of integers");
    out.decay_epochs.clear();
    for (const json& e : *v) {
      if (!e.is_number_integer()) {
        fail("trainer.sgd.decay_epochs", "must be an array of integers");
      }
      out.decay_epochs.push_back(e.get<int>());
    }
  }
  s.get_double("decay_factor", out.decay_factor);
  s.finish();
}

void parse_toggles(const json& node, trainer::LossToggles& out) {
  Section s(node, "trainer.toggles");
  s.get_bool("scale_loss", out.scale_loss);
  s.get_bool("ml_loss", out.ml_loss);
  s.get_bool("cluster_loss", out.cluster_loss);
  s.finish();
}

void parse_presets(const json& node, std::vector<imageops::ScalePreset>& out) {
  if (!node.is_array()) fail("trainer.presets", "must be an array");
  out.clear();
  for (std::size_t i = 0; i < node.size(); ++i) {
    Section s(node[i], "trainer.presets[" + std::to_string(i) + "]");
    imageops::ScalePreset preset;
    s.get_string("name", preset.name);
    s.get_int("height", preset.height);
    s.get_int("width", preset.width);
    s.finish();
    out.push_back(std::move(preset));
  }
}

void parse_trainer(const json& node, trainer::TrainConfig& out) {
  Section s(node, "trainer");
  s.get_int("epochs", out.epochs);
  s.get_int("batch_scenes", out.batch_scenes);
  if (const json* v = s.find("sgd")) parse_sgd(*v, out.sgd);
  if (const json* v = s.find("toggles")) parse_toggles(*v, out.toggles);
  s.get_double("bank_momentum", out.bank_momentum);
  s.get_bool("bank_renormalize", out.bank_renormalize);
  std::string mode = trainer::scale_mode_name(out.scale_mode);
  s.get_string("scale_mode", mode);
  out.scale_mode = trainer::parse_scale_mode(mode);
  s.get_bool("use_mask", out.use_mask);
  if (const json* v = s.find("presets")) parse_presets(*v, out.presets);
  s.get_int("threads", out.threads);
  s.get_u64("seed", out.seed);
  s.finish();
}

void parse_eval(const json& node, trainer::TrainConfig& out) {
  Section s(node, "eval");
  s.get_double("probe_fraction", out.probe_fraction);
  s.finish();
}

}  // namespace

RunConfig parse(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann's message carries the line/column position
    throw Error(Errc::invalid_config, std::string("config: ") + e.what());
  }
  RunConfig out;
  Section root(doc, "(root)");
  if (const json* v = root.find("data")) parse_data(*v, out.data);
  if (const json* v = root.find("encoder")) parse_encoder(*v, out.train.encoder);
  if (const json* v = root.find("losses")) parse_losses(*v, out.train.sil, out.train.dml);
  if (const json* v = root.find("threshold")) parse_threshold(*v, out.train.threshold);
  if (const json* v = root.find("dbscan")) parse_dbscan(*v, out.train.dbscan);
  if (const json* v = root.find("trainer")) parse_trainer(*v, out.train);
  if (const json* v = root.find("eval")) parse_eval(*v, out.train);
  root.finish();

  synthdata::validate_config(out.data);
  trainer::validate(out.train);
  return out;
}

RunConfig load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_failure, "cannot open config file " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  if (in.bad()) {
    throw Error(Errc::io_failure, "cannot read config file " + path.string());
  }
  return parse(text.str());
}

std::string resolve(const RunConfig& config) {
  const trainer::TrainConfig& t = config.train;
  ordered_json presets = ordered_json::array();
  for (const imageops::ScalePreset& p : t.presets) {
    presets.push_back(ordered_json{{"name", p.name}, {"height", p.height}, {"width", p.width}});
  }
  ordered_json doc{
      {"data",
       {{"num_identities", config.data.num_identities},
        {"num_scenes", config.data.num_scenes},
        {"min_per_scene", config.data.min_per_scene},
        {"max_per_scene", config.data.max_per_scene},
        {"scene_height", config.data.scene_height},
        {"scene_width", config.data.scene_width},
        {"canonical_height", config.data.canonical_height},
        {"canonical_width", config.data.canonical_width},
        {"scale_min", config.data.scale_min},
        {"scale_max", config.data.scale_max},
        {"noise_level", config.data.noise_level},
        {"seed", config.data.seed}}},
      {"encoder",
       {{"dim", t.encoder.dim}, {"grid_h", t.encoder.grid_h}, {"grid_w", t.encoder.grid_w}}},
      {"losses",
       {{"margin", t.sil.margin},
        {"gamma", t.sil.gamma},
        {"delta", t.dml.delta},
        {"tau", t.dml.tau}}},
      {"threshold",
       {{"start", t.threshold.start},
        {"amplitude", t.threshold.amplitude},
        {"decay", t.threshold.decay}}},
      {"dbscan", {{"eps", t.dbscan.eps}, {"min_pts", t.dbscan.min_pts}}},
      {"trainer",
       {{"epochs", t.epochs},
        {"batch_scenes", t.batch_scenes},
        {"sgd",
         {{"learning_rate", t.sgd.learning_rate},
          {"momentum", t.sgd.momentum},
          {"weight_decay", t.sgd.weight_decay},
          {"decay_epochs", t.sgd.decay_epochs},
          {"decay_factor", t.sgd.decay_factor}}},
        {"toggles",
         {{"scale_loss", t.toggles.scale_loss},
          {"ml_loss", t.toggles.ml_loss},
          {"cluster_loss", t.toggles.cluster_loss}}},
        {"bank_momentum", t.bank_momentum},
        {"bank_renormalize", t.bank_renormalize},
        {"scale_mode", trainer::scale_mode_name(t.scale_mode)},
        {"use_mask", t.use_mask},
        {"presets", presets},
        {"threads", t.threads},
        {"seed", t.seed}}},
      {"eval", {{"probe_fraction", t.probe_fraction}}},
  };
  return doc.dump(2) + "\n";
}

void write_resolved(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(Errc::io_failure, "cannot open " + path.string());
  }
  out << resolve(config);
  if (!out) {
    throw Error(Errc::io_failure, "failed writing " + path.string());
  }
}

}  // namespace siml::config
