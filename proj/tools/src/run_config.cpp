#include "crowdmac_cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "crowdmac/errors.hpp"

namespace crowdmac::cli {
namespace {

using nlohmann::json;

std::string_view to_string(KernelConvention c) { return c == KernelConvention::PeakUnit ? "peak" : "unit_mass"; }

KernelConvention parse_convention(std::string_view s) {
  if (s == "peak") return KernelConvention::PeakUnit;
  if (s == "unit_mass") return KernelConvention::UnitMass;
  throw ParameterError("unknown kernel convention '" + std::string(s) + "' (expected peak or unit_mass)");
}

json::json_pointer pointer_for(std::string_view dotted) {
  std::string p;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const std::size_t dot = dotted.find('.', start);
    const std::size_t end = dot == std::string_view::npos ? dotted.size() : dot;
    p += '/';
    p += dotted.substr(start, end - start);
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return json::json_pointer(p);
}

// Plain values map straight to JSON; enums go through their string names.
template <class T>
json encode(const T& v) {
  if constexpr (std::is_same_v<T, TmFunction> || std::is_same_v<T, MaskTask> ||
                std::is_same_v<T, KernelConvention>) {
    return std::string(to_string(v));
  } else if constexpr (std::is_same_v<T, std::vector<TmFunction>> || std::is_same_v<T, std::vector<MaskTask>> ||
                       std::is_same_v<T, std::vector<std::vector<MaskTask>>>) {
    json arr = json::array();
    for (const auto& x : v) arr.push_back(encode(x));
    return arr;
  } else {
    return json(v);
  }
}

[[noreturn]] void type_mismatch(const std::string& key, const char* expected, const json& got) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got " + got.dump());
}

template <class T>
void decode(const std::string& key, const json& j, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) type_mismatch(key, "a boolean", j);
    out = j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) type_mismatch(key, "an integer", j);
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_unsigned()) {
        out = j.get<T>();
      } else if (j.get<std::int64_t>() < 0) {
        type_mismatch(key, "a non-negative integer", j);
      } else {
        out = static_cast<T>(j.get<std::int64_t>());
      }
    } else {
      out = j.get<T>();
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) type_mismatch(key, "a number", j);
    out = j.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) type_mismatch(key, "a string", j);
    out = j.get<std::string>();
  } else if constexpr (std::is_same_v<T, TmFunction> || std::is_same_v<T, MaskTask> ||
                       std::is_same_v<T, KernelConvention>) {
    if (!j.is_string()) type_mismatch(key, "a name", j);
    try {
      if constexpr (std::is_same_v<T, TmFunction>) out = parse_tm_function(j.get<std::string>());
      if constexpr (std::is_same_v<T, MaskTask>) out = parse_mask_task(j.get<std::string>());
      if constexpr (std::is_same_v<T, KernelConvention>) out = parse_convention(j.get<std::string>());
    } catch (const ParameterError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  } else if constexpr (std::is_same_v<T, std::array<double, 3>>) {
    if (!j.is_array() || j.size() != 3) type_mismatch(key, "an array of 3 numbers", j);
    for (std::size_t i = 0; i < 3; ++i) decode(key, j[i], out[i]);
  } else {
    // std::vector<U>
    if (!j.is_array()) type_mismatch(key, "an array", j);
    out.clear();
    for (const auto& x : j) {
      typename T::value_type v{};
      decode(key, x, v);
      out.push_back(std::move(v));
    }
  }
}

// Every config field, by dotted key. The single list drives writing, reading and the
// unknown-key check.
template <class F>
void fields(RunConfig& c, F&& f) {
  f("seed", c.seed);
  f("output_dir", c.output_dir);
  for (auto [name, sim] : {std::pair<const char*, SimConfig*>{"sim", &c.sim}, {"test_sim", &c.test_sim}}) {
    const std::string p = std::string(name) + ".";
    f(p + "width", sim->width);
    f(p + "height", sim->height);
    f(p + "n_agents", sim->n_agents);
    f(p + "frames", sim->frames);
    f(p + "speed_mean", sim->speed_mean);
    f(p + "speed_std", sim->speed_std);
    f(p + "turn_std", sim->turn_std);
    f(p + "spawn_rate", sim->spawn_rate);
    f(p + "despawn", sim->despawn);
    f(p + "frame_interval", sim->frame_interval);
    f(p + "seed", sim->seed);
  }
  f("data.train_path", c.data.train_path);
  f("data.test_path", c.data.test_path);
  f("data.stride", c.data.stride);
  f("data.test_stride", c.data.test_stride);
  f("raster.sigma", c.raster.sigma);
  f("raster.convention", c.raster.convention);
  f("grid.cube_t", c.cube_t);
  f("grid.cube_h", c.cube_h);
  f("grid.cube_w", c.cube_w);
  f("model.embed_dim", c.model.embed_dim);
  f("model.encoder_depth", c.model.encoder_depth);
  f("model.decoder_dim", c.model.decoder_dim);
  f("model.decoder_depth", c.model.decoder_depth);
  f("model.heads", c.model.heads);
  f("model.mlp_ratio", c.model.mlp_ratio);
  f("train.base_lr", c.train.base_lr);
  f("train.scale_lr_by_batch", c.train.scale_lr_by_batch);
  f("train.weight_decay", c.train.weight_decay);
  f("train.epochs", c.train.epochs);
  f("train.warmup_epochs", c.train.warmup_epochs);
  f("train.batch_size", c.train.batch_size);
  f("train.beta1", c.train.beta1);
  f("train.beta2", c.train.beta2);
  f("train.augment.rotate", c.train.augment.rotate);
  f("train.augment.hflip", c.train.augment.hflip);
  f("train.augment.vflip", c.train.augment.vflip);
  f("train.augment.scale", c.train.augment.scale);
  f("train.augment.scale_min", c.train.augment.scale_min);
  f("train.augment.scale_max", c.train.augment.scale_max);
  f("tdm.lambda_max", c.tdm.lambda_max);
  f("tdm.tau", c.tdm.tau);
  f("tdm.task_weights", c.tdm.task_weights);
  f("tdm.tm_function", c.tdm.tm_function);
  f("tdm.constant_ratio", c.tdm.constant_ratio);
  f("tdm.dm_enabled", c.tdm.dm_enabled);
  f("tdm.lambda_per_batch", c.tdm.lambda_per_batch);
  f("eval.obs_frames", c.eval.obs_frames);
  f("eval.pred_frames", c.eval.pred_frames);
  f("eval.width", c.eval.width);
  f("eval.height", c.eval.height);
  f("eval.epsilon", c.eval.epsilon);
  f("eval.miss_ratio", c.eval.miss_ratio);
  f("eval.whole_track", c.eval.whole_track);
  f("eval.seed", c.eval.seed);
  f("eval.heatmaps", c.heatmaps);
  f("eval.robustness_ratios", c.robustness_ratios);
  f("corrupt.miss_ratio", c.corrupt.miss_ratio);
  f("corrupt.seed", c.corrupt.seed);
  f("corrupt.whole_track", c.corrupt.whole_track);
  f("ablation.tm_functions", c.ablation.tm_functions);
  f("ablation.task_combos", c.ablation.task_combos);
}

json to_document(const RunConfig& cfg) {
  RunConfig copy = cfg;
  json doc = json::object();
  fields(copy, [&](const std::string& key, auto& value) { doc[pointer_for(key)] = encode(value); });
  return doc;
}

void reject_unknown(const json& node, const std::string& prefix, const std::set<std::string>& known) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (known.contains(key)) continue;
    if (it->is_object()) {
      bool is_section = false;
      for (const auto& k : known) {
        if (k.rfind(key + ".", 0) == 0) {
          is_section = true;
          break;
        }
      }
      if (is_section) {
        reject_unknown(*it, key, known);
        continue;
      }
    }
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  doc[pointer_for(key)] = std::move(value);
}

}  // namespace

RunConfig::RunConfig() {
  test_sim.seed = 1;
  test_sim.frames = 420;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.grid = CubeGrid{eval.obs_frames + eval.pred_frames, eval.height, eval.width, cube_t, cube_h, cube_w};
  m.obs_frames = eval.obs_frames;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

EvalProtocol RunConfig::eval_protocol() const {
  EvalProtocol p = eval;
  p.raster = raster;
  return p;
}

void RunConfig::validate() const {
  const auto section = [](const char* name, auto&& check) {
    try {
      check();
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("config section '") + name + "': " + e.what());
    } catch (const RangeError& e) {
      throw ConfigError(std::string("config section '") + name + "': " + e.what());
    }
  };
  section("sim", [&] { sim.validate(); });
  section("test_sim", [&] { test_sim.validate(); });
  section("model", [&] { model_config().validate(); });
  section("train", [&] { train_config().validate(); });
  section("tdm", [&] { tdm.validate(); });
  section("eval", [&] { eval_protocol().validate(); });
  section("corrupt", [&] { corrupt.validate(); });
  if (data.stride < 1 || data.test_stride < 1) throw ConfigError("config section 'data': strides must be >= 1");
  if (!(raster.sigma > 0.0)) throw ConfigError("config key 'raster.sigma' must be positive");
  if (heatmaps < 0) throw ConfigError("config key 'eval.heatmaps' must be >= 0");
  for (const double p : robustness_ratios) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("config key 'eval.robustness_ratios': ratios must lie in [0, 1]");
  }
  for (const auto* s : {&sim, &test_sim}) {
    if (s->width != eval.width || s->height != eval.height) {
      throw ConfigError("simulated scene size must equal eval.width x eval.height");
    }
  }
  if (ablation.tm_functions.empty()) throw ConfigError("config key 'ablation.tm_functions' is empty");
  if (ablation.task_combos.empty()) throw ConfigError("config key 'ablation.task_combos' is empty");
}

std::string to_json(const RunConfig& cfg) { return to_document(cfg).dump(2) + "\n"; }

std::string default_config_json() { return to_json(RunConfig{}); }

RunConfig parse_config(const std::string& text, std::span<const std::string> overrides) {
  json doc = json::parse(text, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& o : overrides) apply_override(doc, o);

  RunConfig cfg;
  std::set<std::string> known;
  fields(cfg, [&](const std::string& key, auto&) { known.insert(key); });
  reject_unknown(doc, "", known);

  fields(cfg, [&](const std::string& key, auto& value) {
    const auto ptr = pointer_for(key);
    if (doc.contains(ptr)) decode(key, doc[ptr], value);
  });
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

}  // namespace crowdmac::cli
