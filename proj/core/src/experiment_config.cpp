#include "vccdsa/experiment_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vccdsa/error.hpp"

namespace vccdsa {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value) {
  throw ConfigError("invalid value '" + value + "' for " + key);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) bad(key, v);
    return d;
  } catch (const std::logic_error&) {
    bad(key, v);
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v);
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) bad(key, v);
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad(key, v);
}

std::string fmt_double(double d) {
  // Shortest text that parses back to the same double.
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, r.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += f(v[i]);
  }
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define VCCDSA_DOUBLE(KEY, MEMBER)                                                                          \
  {KEY, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_double(k, v); }, \
              [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); }}}
#define VCCDSA_INT(KEY, MEMBER)                                                                              \
  {KEY, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {                          \
                c.MEMBER = static_cast<decltype(c.MEMBER)>(to_int(k, v));                                    \
              },                                                                                             \
              [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }}}
#define VCCDSA_U64(KEY, MEMBER)                                                                          \
  {KEY, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_u64(k, v); }, \
              [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }}}
#define VCCDSA_BOOL(KEY, MEMBER)                                                                          \
  {KEY, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = to_bool(k, v); }, \
              [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}}
#define VCCDSA_STRING(KEY, MEMBER)                                                                         \
  {KEY, Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; },       \
              [](const ExperimentConfig& c) { return c.MEMBER; }}}
#define VCCDSA_INT_LIST(KEY, MEMBER)                                                                      \
  {KEY, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {                       \
                c.MEMBER.clear();                                                                         \
                for (const auto& s : split_list(v)) c.MEMBER.push_back(static_cast<int>(to_int(k, s)));   \
              },                                                                                          \
              [](const ExperimentConfig& c) {                                                             \
                return join(c.MEMBER, [](auto x) { return std::to_string(x); });                          \
              }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      VCCDSA_INT("phantom.height", dataset.phantom.height),
      VCCDSA_INT("phantom.width", dataset.phantom.width),
      VCCDSA_INT("phantom.vessel.branch_count", dataset.phantom.vessel.branch_count),
      VCCDSA_INT("phantom.vessel.max_depth", dataset.phantom.vessel.max_depth),
      VCCDSA_DOUBLE("phantom.vessel.radius_min", dataset.phantom.vessel.radius_min),
      VCCDSA_DOUBLE("phantom.vessel.radius_max", dataset.phantom.vessel.radius_max),
      VCCDSA_DOUBLE("phantom.vessel.tortuosity", dataset.phantom.vessel.tortuosity),
      VCCDSA_DOUBLE("phantom.vessel.peak", dataset.phantom.vessel.peak),
      VCCDSA_DOUBLE("phantom.background.base_level", dataset.phantom.background.base_level),
      VCCDSA_INT("phantom.background.bone_count", dataset.phantom.background.bone_count),
      VCCDSA_DOUBLE("phantom.background.bone_intensity_min", dataset.phantom.background.bone_intensity_min),
      VCCDSA_DOUBLE("phantom.background.bone_intensity_max", dataset.phantom.background.bone_intensity_max),
      VCCDSA_DOUBLE("phantom.background.texture_scale", dataset.phantom.background.texture_scale),
      VCCDSA_DOUBLE("phantom.background.texture_amplitude", dataset.phantom.background.texture_amplitude),
      VCCDSA_DOUBLE("phantom.background.edge_sharpness", dataset.phantom.background.edge_sharpness),
      VCCDSA_DOUBLE("phantom.background.peak", dataset.phantom.background.peak),
      VCCDSA_INT("phantom.distractor.tube_count", dataset.phantom.distractor.tube_count),
      VCCDSA_DOUBLE("phantom.distractor.curvature", dataset.phantom.distractor.curvature),
      VCCDSA_DOUBLE("phantom.distractor.intensity_min", dataset.phantom.distractor.intensity_min),
      VCCDSA_DOUBLE("phantom.distractor.intensity_max", dataset.phantom.distractor.intensity_max),
      VCCDSA_DOUBLE("phantom.distractor.radius", dataset.phantom.distractor.radius),
      VCCDSA_INT("phantom.contrast_ramp", dataset.phantom.contrast_ramp),
      VCCDSA_INT("phantom.mask_frames", dataset.phantom.mask_frames),
      VCCDSA_INT("phantom.live_frames", dataset.phantom.live_frames),
      VCCDSA_DOUBLE("phantom.noise_sigma", dataset.phantom.noise_sigma),
      VCCDSA_INT_LIST("dataset.levels", dataset.levels),
      VCCDSA_INT("dataset.sequences", dataset.sequences),
      VCCDSA_U64("dataset.seed", dataset.seed),
      VCCDSA_STRING("dataset.label_source", dataset.label_source),
      {"dataset.split",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               const auto parts = split_list(v);
               if (parts.size() != 3) bad(k, v);
               for (int i = 0; i < 3; ++i) c.dataset.split[static_cast<std::size_t>(i)] = static_cast<int>(to_int(k, parts[static_cast<std::size_t>(i)]));
             },
             [](const ExperimentConfig& c) {
               return std::to_string(c.dataset.split[0]) + "," + std::to_string(c.dataset.split[1]) + "," +
                      std::to_string(c.dataset.split[2]);
             }}},
      VCCDSA_INT("arch.base_channels", arch.base_channels),
      {"arch.stage_channels",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               const auto parts = split_list(v);
               if (parts.size() != 3) bad(k, v);
               for (int i = 0; i < 3; ++i) c.arch.stage_channels[static_cast<std::size_t>(i)] = static_cast<int>(to_int(k, parts[static_cast<std::size_t>(i)]));
             },
             [](const ExperimentConfig& c) {
               return std::to_string(c.arch.stage_channels[0]) + "," + std::to_string(c.arch.stage_channels[1]) +
                      "," + std::to_string(c.arch.stage_channels[2]);
             }}},
      VCCDSA_INT("arch.rdb_layers", arch.rdb_layers),
      VCCDSA_INT("arch.rdb_growth", arch.rdb_growth),
      VCCDSA_INT("arch.kernel", arch.kernel),
      VCCDSA_DOUBLE("arch.scale_factor", arch.scale_factor),
      VCCDSA_DOUBLE("train.learning_rate", train.learning_rate),
      VCCDSA_DOUBLE("train.adam_beta1", train.adam_beta1),
      VCCDSA_DOUBLE("train.adam_beta2", train.adam_beta2),
      VCCDSA_DOUBLE("train.adam_epsilon", train.adam_epsilon),
      VCCDSA_INT("train.batch_size", train.batch_size),
      VCCDSA_INT("train.crop_size", train.crop_size),
      VCCDSA_INT("train.total_steps", train.total_steps),
      VCCDSA_INT("train.checkpoint_every", train.checkpoint_every),
      VCCDSA_BOOL("train.deterministic", train.deterministic),
      VCCDSA_BOOL("train.augment.flip", train.augment.flip),
      VCCDSA_BOOL("train.augment.rotate", train.augment.rotate),
      VCCDSA_BOOL("train.augment.translate_scale", train.augment.translate_scale),
      VCCDSA_BOOL("train.augment.random_crop", train.augment.random_crop),
      VCCDSA_DOUBLE("train.augment.max_rotation_deg", train.augment.max_rotation_deg),
      VCCDSA_DOUBLE("train.augment.max_translation", train.augment.max_translation),
      VCCDSA_DOUBLE("train.augment.max_scale_delta", train.augment.max_scale_delta),
      VCCDSA_DOUBLE("loss.lambda", train.loss.lambda),
      {"sweep.lambdas",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               c.lambdas.clear();
               for (const auto& s : split_list(v)) c.lambdas.push_back(to_double(k, s));
             },
             [](const ExperimentConfig& c) { return join(c.lambdas, fmt_double); }}},
      VCCDSA_BOOL("mdss.enabled", train.mdss.enabled),
      VCCDSA_INT("mdss.bank_capacity", train.mdss.bank_capacity),
      VCCDSA_INT("mdss.warmup_steps", train.mdss.warmup_steps),
      VCCDSA_DOUBLE("mdss.mix_probability", train.mdss.mix_probability),
      VCCDSA_INT("mdss.insert_every", train.mdss.insert_every),
      VCCDSA_DOUBLE("mdss.quality_gate", train.mdss.quality_gate),
      {"methods",
       Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.methods = split_list(v); },
             [](const ExperimentConfig& c) { return join(c.methods, [](const std::string& s) { return s; }); }}},
      {"seeds",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               c.seeds.clear();
               for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
             },
             [](const ExperimentConfig& c) { return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }); }}},
      VCCDSA_INT("registration.search_radius", registration.search_radius),
      VCCDSA_INT("registration.step", registration.step),
      VCCDSA_INT("registration.tile_size", registration.tile_size),
      VCCDSA_INT("eval.timing_warmup", eval.timing_warmup),
      VCCDSA_INT("eval.timing_repeats", eval.timing_repeats),
      VCCDSA_INT_LIST("eval.motion_levels", eval.motion_levels),
      VCCDSA_INT("eval.save_frames", eval.save_frames),
      VCCDSA_STRING("out_dir", out_dir),
  };
  return table;
}

#undef VCCDSA_DOUBLE
#undef VCCDSA_INT
#undef VCCDSA_U64
#undef VCCDSA_BOOL
#undef VCCDSA_STRING
#undef VCCDSA_INT_LIST

const std::vector<std::string> kMethods{"vccdsa", "live_only", "subtract", "translate_reg"};

}  // namespace

void ExperimentConfig::validate() const {
  dataset.phantom.validate();
  if (dataset.sequences < 1) throw ConfigError("dataset.sequences must be >= 1");
  if (dataset.levels.empty()) throw ConfigError("dataset.levels must not be empty");
  for (int l : dataset.levels) motion_bounds(l);
  for (int l : eval.motion_levels) motion_bounds(l);
  if (dataset.split[0] < 0 || dataset.split[1] < 0 || dataset.split[2] < 0 ||
      dataset.split[0] + dataset.split[1] + dataset.split[2] != 100) {
    throw ConfigError("dataset.split must be three non-negative percentages summing to 100");
  }
  if (dataset.label_source != "subtract" && dataset.label_source != "translate_reg") {
    throw ConfigError("dataset.label_source must be subtract or translate_reg");
  }
  arch.validate();
  train.validate();
  if (train.crop_size > dataset.phantom.height || train.crop_size > dataset.phantom.width) {
    throw ConfigError("train.crop_size exceeds the phantom frame size");
  }
  if (methods.empty()) throw ConfigError("methods must not be empty");
  for (const auto& m : methods) {
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) throw ConfigError("unknown method " + m);
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("sweep lambdas must lie in [0, 1]");
  }
  registration.validate();
  if (eval.timing_repeats < 1 || eval.timing_warmup < 0) throw ConfigError("invalid eval timing settings");
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key: " + key);
  it->second.set(cfg, key, value);
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  apply_override(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

ExperimentConfig parse_experiment_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_override(base, line);
  }
  base.validate();
  return base;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), std::move(base));
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

}  // namespace vccdsa
