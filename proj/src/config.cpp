#include "vidswap/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "vidswap/error.hpp"

namespace vidswap {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    const std::string field = path_.empty() ? key : path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("config error at " + field + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("config error at " + field + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ConfigError("config error at " + field + ": expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("config error at " + field + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("config error at " + field + ": expected a string");
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); })) {
        throw ConfigError("config error at " + field + ": expected an array of integers");
      }
    }
    out = v.get<T>();
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string child_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError("config error at " + child_path(item.key()) + ": unknown field");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config error: " : "config error at " + path_ + ": "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto wrap(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config error at " + path + ": " + e.what());
  }
}

}  // namespace

// ------------------------------------------------------------------ to_json

json to_json(const NetConfig& c) {
  return {{"in_resolution", c.in_resolution},
          {"base_channels", c.base_channels},
          {"max_channels", c.max_channels},
          {"n_layers", c.n_layers},
          {"content_dim", c.content_dim},
          {"pose_dim", c.pose_dim},
          {"embed_dim", c.embed_dim},
          {"norm_kind", norm_kind_name(c.norm_kind)},
          {"nonlinearity_kind", nonlinearity_name(c.nonlinearity_kind)}};
}

json to_json(const LossWeights& c) {
  return {{"w_rec", c.w_rec},
          {"w_consist", c.w_consist},
          {"w_adv_pose_code", c.w_adv_pose_code},
          {"w_gan_pose", c.w_gan_pose},
          {"w_gan_content", c.w_gan_content},
          {"w_triplet", c.w_triplet},
          {"margin", c.margin}};
}

json to_json(const SamplerConfig& c) { return {{"window", c.window}, {"seed", c.seed}}; }

json to_json(const MethodConfig& c) {
  return {{"method", method_name(c.method)},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"lr_decay_epochs", c.lr_decay_epochs},
          {"lr_decay_factor", c.lr_decay_factor},
          {"optimizer", {{"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2},
                         {"eps", c.optimizer.eps}}},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"weights", to_json(c.weights)},
          {"sampler", to_json(c.sampler)},
          {"net", to_json(c.net)},
          {"d_steps_per_g_step", c.d_steps_per_g_step},
          {"cgan_reconstruction", c.cgan_reconstruction},
          {"cgan_consistency", c.cgan_consistency},
          {"heatmap_sigma", c.heatmap_sigma},
          {"heatmap_peak_normalize", c.heatmap_peak_normalize}};
}

json to_json(const SyntheticConfig& c) {
  json palette = json::array();
  for (const auto& p : c.palette) palette.push_back(p);
  return {{"n_clips", c.n_clips},
          {"frames_per_clip", c.frames_per_clip},
          {"resolution", c.resolution},
          {"n_keypoints", c.n_keypoints},
          {"palette", palette},
          {"motion", {{"sway_min", c.motion.sway_min}, {"sway_max", c.motion.sway_max},
                      {"swing_min", c.motion.swing_min}, {"swing_max", c.motion.swing_max},
                      {"frequency_min", c.motion.frequency_min},
                      {"frequency_max", c.motion.frequency_max}}},
          {"seed", c.seed}};
}

// ------------------------------------------------------------------ from_json

NetConfig net_config_from_json(const json& j, const std::string& path) {
  NetConfig c;
  ObjectReader r(j, path);
  r.get("in_resolution", c.in_resolution);
  r.get("base_channels", c.base_channels);
  r.get("max_channels", c.max_channels);
  r.get("n_layers", c.n_layers);
  r.get("content_dim", c.content_dim);
  r.get("pose_dim", c.pose_dim);
  r.get("embed_dim", c.embed_dim);
  std::string norm = norm_kind_name(c.norm_kind);
  std::string nonlin = nonlinearity_name(c.nonlinearity_kind);
  r.get("norm_kind", norm);
  r.get("nonlinearity_kind", nonlin);
  r.finish();
  wrap(path, [&] {
    c.norm_kind = parse_norm_kind(norm);
    c.nonlinearity_kind = parse_nonlinearity(nonlin);
    c.validate();
    return 0;
  });
  return c;
}

MethodConfig method_config_from_json(const json& j) {
  MethodConfig c;
  ObjectReader r(j, "");
  std::string method = method_name(c.method);
  r.get("method", method);
  c.method = parse_method(method);
  r.get("epochs", c.epochs);
  r.get("learning_rate", c.learning_rate);
  r.get("lr_decay_epochs", c.lr_decay_epochs);
  r.get("lr_decay_factor", c.lr_decay_factor);
  if (const json* o = r.child("optimizer")) {
    ObjectReader ro(*o, "optimizer");
    ro.get("beta1", c.optimizer.beta1);
    ro.get("beta2", c.optimizer.beta2);
    ro.get("eps", c.optimizer.eps);
    ro.finish();
  }
  r.get("batch_size", c.batch_size);
  r.get("seed", c.seed);
  if (const json* w = r.child("weights")) {
    ObjectReader rw(*w, "weights");
    rw.get("w_rec", c.weights.w_rec);
    rw.get("w_consist", c.weights.w_consist);
    rw.get("w_adv_pose_code", c.weights.w_adv_pose_code);
    rw.get("w_gan_pose", c.weights.w_gan_pose);
    rw.get("w_gan_content", c.weights.w_gan_content);
    rw.get("w_triplet", c.weights.w_triplet);
    rw.get("margin", c.weights.margin);
    rw.finish();
  }
  if (const json* s = r.child("sampler")) {
    ObjectReader rs(*s, "sampler");
    rs.get("window", c.sampler.window);
    rs.get("seed", c.sampler.seed);
    rs.finish();
  }
  if (const json* n = r.child("net")) c.net = net_config_from_json(*n, "net");
  r.get("d_steps_per_g_step", c.d_steps_per_g_step);
  r.get("cgan_reconstruction", c.cgan_reconstruction);
  r.get("cgan_consistency", c.cgan_consistency);
  r.get("heatmap_sigma", c.heatmap_sigma);
  r.get("heatmap_peak_normalize", c.heatmap_peak_normalize);
  r.finish();
  c.validate();
  return c;
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  ObjectReader r(j, "");
  r.get("n_clips", c.n_clips);
  r.get("frames_per_clip", c.frames_per_clip);
  r.get("resolution", c.resolution);
  r.get("n_keypoints", c.n_keypoints);
  if (const json* p = r.child("palette")) {
    if (!p->is_array()) throw ConfigError("config error at palette: expected an array");
    c.palette.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      const json& e = (*p)[i];
      const std::string field = "palette[" + std::to_string(i) + "]";
      if (!e.is_array() || e.size() != 3) {
        throw ConfigError("config error at " + field + ": expected [r, g, b]");
      }
      Rgb rgb{};
      for (int ch = 0; ch < 3; ++ch) {
        if (!e[ch].is_number_integer()) {
          throw ConfigError("config error at " + field + ": channels must be integers");
        }
        rgb[ch] = e[ch].get<int>();
        if (rgb[ch] < 0 || rgb[ch] > 255) {
          throw ConfigError("config error at " + field + ": channels must lie in [0, 255]");
        }
      }
      c.palette.push_back(rgb);
    }
  }
  if (const json* m = r.child("motion")) {
    ObjectReader rm(*m, "motion");
    rm.get("sway_min", c.motion.sway_min);
    rm.get("sway_max", c.motion.sway_max);
    rm.get("swing_min", c.motion.swing_min);
    rm.get("swing_max", c.motion.swing_max);
    rm.get("frequency_min", c.motion.frequency_min);
    rm.get("frequency_max", c.motion.frequency_max);
    rm.finish();
  }
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

void MethodConfig::validate() const {
  if (epochs < 1) throw ConfigError("config error at epochs: must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("config error at learning_rate: must be > 0");
  for (int e : lr_decay_epochs) {
    if (e < 1) throw ConfigError("config error at lr_decay_epochs: epochs must be >= 1");
  }
  if (!(lr_decay_factor > 0.0)) throw ConfigError("config error at lr_decay_factor: must be > 0");
  if (batch_size < 1) throw ConfigError("config error at batch_size: must be >= 1");
  if (d_steps_per_g_step < 1) throw ConfigError("config error at d_steps_per_g_step: must be >= 1");
  if (sampler.window < 1) throw ConfigError("config error at sampler.window: must be >= 1");
  weights.validate();
  net.validate();
}

HeatmapConfig MethodConfig::heatmap() const {
  auto h = HeatmapConfig::for_resolution(net.in_resolution);
  if (heatmap_sigma > 0.0) h.sigma = heatmap_sigma;
  h.peak_normalize = heatmap_peak_normalize;
  return h;
}

AdamOptions MethodConfig::adam() const {
  auto o = optimizer;
  o.learning_rate = learning_rate;
  return o;
}

double MethodConfig::learning_rate_at(int epoch) const {
  double lr = learning_rate;
  for (int e : lr_decay_epochs) {
    if (epoch >= e) lr *= lr_decay_factor;
  }
  return lr;
}

// ------------------------------------------------------------------ files

void apply_overrides(json& j, std::span<const std::string> overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' must have the form key=value");
    }
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (part.empty()) throw ConfigError("override '" + o + "' has an empty key segment");
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError("override '" + o + "': " + part + " is not an object");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FilesystemError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::string format_config(const json& j) { return j.dump(2) + "\n"; }

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FilesystemError("cannot write " + path.string());
  out << format_config(j);
}

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vidswap
