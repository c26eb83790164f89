#include "ucg/harness/config.hpp"

#include <fstream>

namespace ucg::harness {

using nlohmann::json;

json default_config() {
  return json::parse(R"({
  "seed": 0,
  "data": {
    "kind": "sprites",
    "n": 4000,
    "heldout_n": 0,
    "sprite": {"resolution": 32, "size_bins": 4, "jitter": 2, "background_shades": 1, "supersample": 4},
    "ring": {"modes": 8, "radius": 2.0, "sigma": 0.05}
  },
  "model": {
    "latent_dims": 16,
    "base_channels": 16,
    "max_channels": 128,
    "min_channels": 8,
    "classifier_channels": 8,
    "dropout": 0.5,
    "hidden": 64
  },
  "latent": {"kind": "unit-complex"},
  "losses": {
    "eq3": 1.0,
    "eq8a": 1.0,
    "eq8b": 1.0,
    "entropy": 1.0,
    "attribute": 1.0,
    "keep_ratio": 0.3,
    "hist_bins": 32,
    "began_lambda": 0.001,
    "began_gamma": 0.7,
    "mix_generator": false,
    "mixer_rho": 0.99
  },
  "train": {
    "batch": 32,
    "steps": 2000,
    "checkpoint_every": 500,
    "adam": {"learning_rate": 1e-4, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8,
             "decay_rate": 0.96, "decay_steps": 1000.0},
    "attribute": {
      "batch": 32,
      "steps": 2000,
      "learning_rate": 1e-3,
      "focal_gamma": 2.0,
      "softargmax_beta": 1.0,
      "locality_beta": 1.0,
      "mixer_rho": 0.99,
      "max_shift": 2,
      "noise_sigma": 0.02,
      "contractive_sigma": 0.01,
      "contractive_weight": 1e-3
    }
  },
  "diversity": {
    "embedding": "raw-pixel",
    "n0": 15,
    "trials": 20,
    "confidence": 0.5,
    "top_k": 10,
    "max_n": 4096,
    "threshold": null,
    "percentile": 0.01,
    "reference_samples": 1000,
    "batch": 64
  }
})");
}

namespace {

bool compatible(const json& base, const json& value) {
  if (base.is_null()) return value.is_null() || value.is_number();  // optional numbers
  if (base.is_number_unsigned()) return value.is_number_unsigned();
  if (base.is_number_integer()) return value.is_number_integer();
  if (base.is_number()) return value.is_number();
  return base.type() == value.type();
}

void merge_at(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: " + (path.empty() ? "document" : path) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key " + where);
    json& slot = base[key];
    if (slot.is_object()) {
      merge_at(slot, value, where);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config: " + where + " has the wrong type");
    } else if ((slot.is_null() || slot.is_number_float()) && value.is_number()) {
      slot = value.get<double>();  // stays a float slot for later merges
    } else {
      slot = value;
    }
  }
}

template <typename T>
T get(const json& j, const char* key) {
  return j.at(key).get<T>();
}

std::size_t size_of(const json& j, const char* key) { return get<std::size_t>(j, key); }

}  // namespace

void merge_config(json& base, const json& patch) { merge_at(base, patch, ""); }

void apply_override(json& base, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("config override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json patch = value;
  std::size_t end = path.size();
  while (true) {
    const auto dot = path.rfind('.', end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    if (begin >= end) throw ConfigError("config override has an empty key: " + path);
    patch = json{{path.substr(begin, end - begin), patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_config(base, patch);
}

RunConfig resolve_config(const json& config) {
  json merged = default_config();
  merge_config(merged, config);
  RunConfig rc;
  rc.resolved = merged;
  try {
    rc.seed = get<std::uint64_t>(merged, "seed");

    const json& d = merged.at("data");
    const auto kind = get<std::string>(d, "kind");
    if (kind == "sprites") {
      rc.data.kind = DataKind::sprites;
    } else if (kind == "ring") {
      rc.data.kind = DataKind::ring;
    } else {
      throw ConfigError("config: data.kind must be sprites or ring, got " + kind);
    }
    rc.data.n = size_of(d, "n");
    rc.data.heldout_n = size_of(d, "heldout_n");
    const json& s = d.at("sprite");
    rc.data.sprite = {size_of(s, "resolution"), size_of(s, "size_bins"), size_of(s, "jitter"),
                      size_of(s, "background_shades"), size_of(s, "supersample")};
    const json& r = d.at("ring");
    rc.data.ring = {size_of(r, "modes"), get<double>(r, "radius"), get<double>(r, "sigma")};
    if (rc.data.n == 0) throw ConfigError("config: data.n must be positive");

    const json& m = merged.at("model");
    auto& model = rc.model;
    model.latent_dims = size_of(m, "latent_dims");
    model.base_channels = size_of(m, "base_channels");
    model.max_channels = size_of(m, "max_channels");
    model.min_channels = size_of(m, "min_channels");
    model.classifier_channels = size_of(m, "classifier_channels");
    model.dropout = get<double>(m, "dropout");
    model.hidden = size_of(m, "hidden");
    model.latent = latent::parse_latent_kind(get<std::string>(merged.at("latent"), "kind"));
    if (rc.data.kind == DataKind::sprites) {
      rc.data.sprite.validate();
      model.mode = models::Mode::image;
      model.resolution = rc.data.sprite.resolution;
      model.attributes = rc.data.sprite.attributes();
    } else {
      if (rc.data.ring.modes < 2 || !(rc.data.ring.sigma > 0)) throw ConfigError("config: bad data.ring");
      model.mode = models::Mode::vector;
      model.point_dims = 2;
      model.attributes = {};
    }
    model.validate();

    const json& l = merged.at("losses");
    auto& t = rc.train;
    t.weights = {get<double>(l, "eq3"), get<double>(l, "eq8a"), get<double>(l, "eq8b"), get<double>(l, "entropy"),
                 get<double>(l, "attribute")};
    t.keep_ratio = get<double>(l, "keep_ratio");
    t.hist_bins = size_of(l, "hist_bins");
    t.began_lambda = get<double>(l, "began_lambda");
    t.began_gamma = get<double>(l, "began_gamma");
    t.mix_generator = get<bool>(l, "mix_generator");
    t.mixer_rho = get<double>(l, "mixer_rho");

    const json& tr = merged.at("train");
    t.batch = size_of(tr, "batch");
    t.steps = size_of(tr, "steps");
    t.checkpoint_every = size_of(tr, "checkpoint_every");
    const json& a = tr.at("adam");
    t.adam = {get<double>(a, "learning_rate"), get<double>(a, "beta1"), get<double>(a, "beta2"),
              get<double>(a, "epsilon"), get<double>(a, "decay_rate"), get<double>(a, "decay_steps")};
    t.seed = rc.seed;
    t.validate(model);

    const json& at = tr.at("attribute");
    auto& ac = rc.attribute;
    ac.batch = size_of(at, "batch");
    ac.steps = size_of(at, "steps");
    ac.adam = t.adam;
    ac.adam.learning_rate = get<double>(at, "learning_rate");
    ac.focal_gamma = get<double>(at, "focal_gamma");
    ac.softargmax_beta = get<double>(at, "softargmax_beta");
    ac.locality_beta = get<double>(at, "locality_beta");
    ac.mixer_rho = get<double>(at, "mixer_rho");
    ac.max_shift = get<int>(at, "max_shift");
    ac.noise_sigma = get<double>(at, "noise_sigma");
    ac.contractive_sigma = get<double>(at, "contractive_sigma");
    ac.contractive_weight = get<double>(at, "contractive_weight");
    ac.seed = rc.seed;
    if (ac.batch < 2) throw ConfigError("config: train.attribute.batch must be at least 2");

    const json& v = merged.at("diversity");
    auto& dc = rc.diversity;
    dc.embedding = diversity::parse_embedding_kind(get<std::string>(v, "embedding"));
    dc.birthday = {size_of(v, "n0"), size_of(v, "trials"), get<double>(v, "confidence"), size_of(v, "top_k"),
                   size_of(v, "max_n"), rc.seed};
    if (!v.at("threshold").is_null()) dc.threshold = get<double>(v, "threshold");
    dc.percentile = get<double>(v, "percentile");
    dc.reference_samples = size_of(v, "reference_samples");
    dc.batch = size_of(v, "batch");
    if (dc.threshold && !(*dc.threshold > 0)) throw ConfigError("config: diversity.threshold must be positive");
    if (!(dc.percentile > 0 && dc.percentile <= 1)) throw ConfigError("config: diversity.percentile must be in (0, 1]");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  json config = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config: cannot open " + file->string());
    config = json::parse(in, nullptr, false);
    if (config.is_discarded()) throw ConfigError("config: " + file->string() + " is not valid JSON");
  }
  json merged = default_config();
  merge_config(merged, config);
  for (const auto& o : overrides) apply_override(merged, o);
  return resolve_config(merged);
}

}  // namespace ucg::harness
