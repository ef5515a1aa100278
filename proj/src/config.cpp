#include "soldernet/config.hpp"

#include <fstream>
#include <set>

namespace soldernet {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ValidationError("config section '" + section + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : obj.items()) {
    if (!allowed.contains(k)) throw ValidationError("unknown config key '" + section + "." + k + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string baseline_name(const xai::Baseline& b) {
  switch (b.kind) {
    case xai::Baseline::Kind::mean_color: return "mean";
    case xai::Baseline::Kind::mid_gray: return "gray";
    case xai::Baseline::Kind::constant: return "constant";
  }
  return "mean";
}

xai::Baseline baseline_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "mean") return xai::Baseline::mean();
    if (s == "gray" || s == "grey") return xai::Baseline::gray();
    throw ValidationError("unknown XAI baseline '" + s + "'");
  }
  if (j.is_array() && j.size() == 3) {
    return xai::Baseline::constant({j[0].get<float>(), j[1].get<float>(), j[2].get<float>()});
  }
  throw ValidationError("XAI baseline must be \"mean\", \"gray\" or an [r,g,b] triple");
}

}  // namespace

void Config::validate() const {
  thresholds.validate();
  if (!(eval_threshold >= 0 && eval_threshold <= 1)) throw ParameterError("eval_threshold must lie in [0,1]");
  if (xai.grid <= 0 || kImageSize % xai.grid != 0) throw ParameterError("xai.grid must divide 256");
  if (xai.subdivide <= 0 || (kImageSize / xai.grid) % xai.subdivide != 0) {
    throw ParameterError("xai.subdivide must divide the cell size");
  }
  if (!(xai.rho > 0 && xai.rho <= 1)) throw ParameterError("xai.rho must lie in (0,1]");
  tsne.validate();
  trust.validate();
  augment.validate();
  if (service.snapshot_interval < 0) throw ParameterError("service.snapshot_interval must be >= 0");
  if (service.page_size <= 0) throw ParameterError("service.page_size must be positive");
}

Config config_from_json(const json& j) {
  Config c;
  reject_unknown(j, "", {"thresholds", "eval_threshold", "xai", "tsne", "trust", "augment", "service"});
  read(j, "eval_threshold", c.eval_threshold);
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    reject_unknown(t, "thresholds", {"t_low", "t_high"});
    read(t, "t_low", c.thresholds.t_low);
    read(t, "t_high", c.thresholds.t_high);
  }
  if (j.contains("xai")) {
    const auto& x = j["xai"];
    reject_unknown(x, "xai", {"grid", "subdivide", "rho", "baseline"});
    read(x, "grid", c.xai.grid);
    read(x, "subdivide", c.xai.subdivide);
    read(x, "rho", c.xai.rho);
    if (x.contains("baseline")) c.xai.baseline = baseline_from_json(x["baseline"]);
  }
  if (j.contains("tsne")) {
    const auto& t = j["tsne"];
    reject_unknown(t, "tsne", {"perplexity", "iterations", "learning_rate", "early_exaggeration",
                               "exaggeration_iterations", "initial_momentum", "final_momentum", "seed"});
    read(t, "perplexity", c.tsne.perplexity);
    read(t, "iterations", c.tsne.iterations);
    read(t, "learning_rate", c.tsne.learning_rate);
    read(t, "early_exaggeration", c.tsne.early_exaggeration);
    read(t, "exaggeration_iterations", c.tsne.exaggeration_iterations);
    read(t, "initial_momentum", c.tsne.initial_momentum);
    read(t, "final_momentum", c.tsne.final_momentum);
    read(t, "seed", c.tsne.seed);
  }
  if (j.contains("trust")) {
    const auto& t = j["trust"];
    reject_unknown(t, "trust", {"alpha", "beta"});
    read(t, "alpha", c.trust.alpha);
    read(t, "beta", c.trust.beta);
  }
  if (j.contains("augment")) {
    const auto& a = j["augment"];
    reject_unknown(a, "augment", {"rotation", "rotation_min_deg", "rotation_max_deg", "hflip", "vflip", "translation",
                                  "translate_frac", "brightness", "brightness_jitter", "contrast", "contrast_jitter",
                                  "per_op_probability"});
    read(a, "rotation", c.augment.rotation);
    read(a, "rotation_min_deg", c.augment.rotation_min_deg);
    read(a, "rotation_max_deg", c.augment.rotation_max_deg);
    read(a, "hflip", c.augment.hflip);
    read(a, "vflip", c.augment.vflip);
    read(a, "translation", c.augment.translation);
    read(a, "translate_frac", c.augment.translate_frac);
    read(a, "brightness", c.augment.brightness);
    read(a, "brightness_jitter", c.augment.brightness_jitter);
    read(a, "contrast", c.augment.contrast);
    read(a, "contrast_jitter", c.augment.contrast_jitter);
    read(a, "per_op_probability", c.augment.per_op_probability);
  }
  if (j.contains("service")) {
    const auto& s = j["service"];
    reject_unknown(s, "service", {"fsync", "snapshot_interval", "page_size"});
    if (s.contains("fsync")) {
      const auto f = s["fsync"].get<std::string>();
      if (f == "always") c.service.fsync = FsyncPolicy::every_event;
      else if (f == "never") c.service.fsync = FsyncPolicy::never;
      else throw ValidationError("service.fsync must be \"always\" or \"never\"");
    }
    read(s, "snapshot_interval", c.service.snapshot_interval);
    read(s, "page_size", c.service.page_size);
  }
  c.validate();
  return c;
}

json to_json(const Config& c) {
  json baseline = baseline_name(c.xai.baseline);
  if (c.xai.baseline.kind == xai::Baseline::Kind::constant) {
    baseline = {c.xai.baseline.color.r, c.xai.baseline.color.g, c.xai.baseline.color.b};
  }
  const auto& a = c.augment;
  return {{"thresholds", {{"t_low", c.thresholds.t_low}, {"t_high", c.thresholds.t_high}}},
          {"eval_threshold", c.eval_threshold},
          {"xai", {{"grid", c.xai.grid}, {"subdivide", c.xai.subdivide}, {"rho", c.xai.rho}, {"baseline", baseline}}},
          {"tsne",
           {{"perplexity", c.tsne.perplexity},
            {"iterations", c.tsne.iterations},
            {"learning_rate", c.tsne.learning_rate},
            {"early_exaggeration", c.tsne.early_exaggeration},
            {"exaggeration_iterations", c.tsne.exaggeration_iterations},
            {"initial_momentum", c.tsne.initial_momentum},
            {"final_momentum", c.tsne.final_momentum},
            {"seed", c.tsne.seed}}},
          {"trust", {{"alpha", c.trust.alpha}, {"beta", c.trust.beta}}},
          {"augment",
           {{"rotation", a.rotation},
            {"rotation_min_deg", a.rotation_min_deg},
            {"rotation_max_deg", a.rotation_max_deg},
            {"hflip", a.hflip},
            {"vflip", a.vflip},
            {"translation", a.translation},
            {"translate_frac", a.translate_frac},
            {"brightness", a.brightness},
            {"brightness_jitter", a.brightness_jitter},
            {"contrast", a.contrast},
            {"contrast_jitter", a.contrast_jitter},
            {"per_op_probability", a.per_op_probability}}},
          {"service",
           {{"fsync", c.service.fsync == FsyncPolicy::every_event ? "always" : "never"},
            {"snapshot_interval", c.service.snapshot_interval},
            {"page_size", c.service.page_size}}}};
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace soldernet
