#pragma once

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "recloss/linear.hpp"
#include "recloss/losses.hpp"
#include "recloss/mf.hpp"
#include "recloss/sampling.hpp"
#include "recloss/synthetic.hpp"

namespace recloss {

using Json = nlohmann::json;

/// Every recognised key with its default. Documents and user overrides may
/// only set keys that appear here, with a value of the same JSON type.
inline Json default_config() {
  return Json::parse(R"({
    "command": "train",
    "data_dir": "",
    "dataset_name": "",
    "output_dir": "out",
    "seed": 0,
    "preset": "",
    "synthetic": {
      "enabled": false, "users": 200, "items": 300, "blocks": 5,
      "in_block_rate": 0.75, "noise": 0.05, "test_fraction": 0.2
    },
    "loss": {
      "kind": "mine_plus",
      "lambda": 1.1,
      "epsilon": 0.0,
      "mine_normalized": false,
      "negative_weight": 1.0,
      "margin": 0.9,
      "lambda_n": 1.0,
      "tau_plus_mode": "topk",
      "k": 20,
      "alpha": 0.0,
      "clamp_floor": true,
      "ccl_floor_at_zero": false,
      "mse_negative_weight": 1.0
    },
    "sampler": {
      "kind": "uniform",
      "n_negatives": 800,
      "m_positives": 10,
      "shared_negatives": false
    },
    "train": {
      "embedding_dim": 64,
      "batch_size": 512,
      "initial_lr": 1e-4,
      "plateau_factor": 0.5,
      "plateau_patience": 3,
      "improvement_threshold": 1e-4,
      "min_lr": 1e-6,
      "l2_weight": 0.0,
      "max_epochs": 1000,
      "init_std": 0.01,
      "score_mode": "auto",
      "temperature": 1.0,
      "eval_k": 20,
      "validation_fraction": 0.1
    },
    "linear": {
      "model": "ials",
      "dim": 64,
      "alpha0": 0.1,
      "lambda": 0.01,
      "nu": 1.0,
      "c_u": 1.0,
      "alpha": 0.0,
      "sweeps": 10,
      "init_std": 0.1,
      "item_budget": 30000
    },
    "eval": {
      "k": 20,
      "checkpoint": "",
      "model_name": ""
    },
    "verify": {
      "bound_instances": 10000,
      "bound_max_n": 64,
      "equivalence_instances": 50
    },
    "sweep": {
      "axis": "loss.lambda",
      "values": [],
      "workers": 0
    }
  })");
}

/// Named hyperparameter bundles for the published MINE+ and debiased-CCL
/// runs. The debiased-CCL "regularization -9" entries are read as 1e-9.
inline const std::map<std::string, Json>& presets() {
  static const std::map<std::string, Json> table = [] {
    std::map<std::string, Json> t;
    auto mine_plus = [](double lambda, double temp, double reg) {
      return Json{{"loss", {{"kind", "mine_plus"}, {"lambda", lambda}}},
                  {"train", {{"temperature", temp}, {"l2_weight", reg}, {"score_mode", "cosine"}}},
                  {"sampler", {{"n_negatives", 800}}}};
    };
    auto debiased_ccl = [](double lambda_n, double margin, std::size_t m) {
      return Json{{"loss", {{"kind", "debiased_ccl"}, {"lambda_n", lambda_n}, {"margin", margin}}},
                  {"train", {{"temperature", 1.0}, {"l2_weight", 1e-9}, {"score_mode", "cosine"}}},
                  {"sampler", {{"n_negatives", 800}, {"m_positives", m}}}};
    };
    t["mine+/yelp2018"] = mine_plus(1.1, 0.5, 1.0);
    t["mine+/gowalla"] = mine_plus(1.2, 0.4, 1.0);
    t["mine+/amazon-books"] = mine_plus(1.1, 0.4, 0.01);
    t["debiased-ccl/yelp2018"] = debiased_ccl(0.4, 0.9, 10);
    t["debiased-ccl/gowalla"] = debiased_ccl(0.7, 0.9, 20);
    t["debiased-ccl/amazon-books"] = debiased_ccl(0.6, 0.4, 50);
    return t;
  }();
  return table;
}

namespace detail {

inline bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

/// Merges `patch` into `base`, rejecting keys absent from `schema`.
inline void merge_checked(Json& base, const Json& patch, const Json& schema, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const Json& expected = schema.at(it.key());
    if (expected.is_object()) {
      merge_checked(base[it.key()], it.value(), expected, key);
    } else {
      if (!same_kind(expected, it.value()))
        throw ConfigError("config key '" + key + "' expects a " + std::string(expected.type_name()) +
                          ", got " + std::string(it.value().type_name()));
      base[it.key()] = it.value();
    }
  }
}

}  // namespace detail

/// Sets a dotted key ("loss.lambda") from its textual value. The text is
/// parsed as JSON when possible and otherwise taken as a string.
inline void set_config_value(Json& cfg, std::string_view dotted, std::string_view text) {
  std::string path(dotted);
  std::vector<std::string> parts;
  for (std::size_t start = 0;;) {
    auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const Json* expected = nullptr;
  {
    static const Json schema = default_config();
    const Json* node = &schema;
    for (const auto& p : parts) {
      if (!node->is_object() || !node->contains(p)) throw ConfigError("unknown config key '" + path + "'");
      node = &node->at(p);
    }
    expected = node;
  }
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = std::string(text);
  }
  // string keys take the text verbatim unless it is a quoted JSON string
  if (expected->is_string() && !value.is_string()) value = std::string(text);
  Json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  detail::merge_checked(cfg, patch, default_config(), "");
}

inline Json get_config_value(const Json& cfg, std::string_view dotted) {
  const Json* node = &cfg;
  std::string path(dotted);
  for (std::size_t start = 0;;) {
    auto dot = path.find('.', start);
    const auto key = path.substr(start, dot - start);
    if (!node->contains(key)) throw ConfigError("unknown config key '" + std::string(dotted) + "'");
    node = &node->at(key);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return *node;
}

/// defaults <- preset <- file document <- explicit overrides.
inline Json resolve_config(const Json& file_doc, const std::string& preset_flag,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  Json cfg = default_config();
  const Json schema = default_config();
  std::string preset = preset_flag;
  if (preset.empty() && file_doc.is_object() && file_doc.contains("preset") && file_doc["preset"].is_string())
    preset = file_doc["preset"].get<std::string>();
  if (!preset.empty()) {
    auto it = presets().find(preset);
    if (it == presets().end()) throw ConfigError("unknown preset '" + preset + "'");
    detail::merge_checked(cfg, it->second, schema, "");
  }
  if (!file_doc.is_null()) detail::merge_checked(cfg, file_doc, schema, "");
  cfg["preset"] = preset;
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  return cfg;
}

inline Json load_config_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config file " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + p.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// typed views

namespace detail {

template <class F>
auto config_parse(F&& parse) {
  try {
    return parse();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace detail

inline LossConfig loss_config(const Json& cfg) {
  const Json& j = cfg.at("loss");
  LossConfig c;
  c.kind = detail::config_parse([&] { return parse_loss_kind(j.at("kind").get<std::string>()); });
  c.infonce_plus.lambda = j.at("lambda").get<double>();
  c.infonce_plus.epsilon = j.at("epsilon").get<double>();
  c.mine_plus_lambda = j.at("lambda").get<double>();
  c.mine_normalized = j.at("mine_normalized").get<bool>();
  c.ccl.negative_weight = j.at("negative_weight").get<double>();
  c.ccl.margin = j.at("margin").get<double>();
  c.debias.lambda_n = j.at("lambda_n").get<double>();
  const auto mode = j.at("tau_plus_mode").get<std::string>();
  if (mode == "topk") c.debias.tau_plus_mode = TauPlusMode::top_k;
  else if (mode == "proportional") c.debias.tau_plus_mode = TauPlusMode::proportional;
  else throw ConfigError("loss.tau_plus_mode must be 'topk' or 'proportional'");
  c.debias.k = j.at("k").get<std::size_t>();
  c.debias.alpha = j.at("alpha").get<double>();
  c.debias.clamp_floor_enabled = j.at("clamp_floor").get<bool>();
  c.debias.ccl_floor_at_zero = j.at("ccl_floor_at_zero").get<bool>();
  c.debias.temperature = cfg.at("train").at("temperature").get<double>();
  c.mse_negative_weight = j.at("mse_negative_weight").get<double>();

  if (c.infonce_plus.lambda < 0.0) throw ConfigError("loss.lambda must be >= 0");
  if (c.infonce_plus.epsilon < 0.0) throw ConfigError("loss.epsilon must be >= 0");
  if (c.ccl.negative_weight < 0.0) throw ConfigError("loss.negative_weight must be >= 0");
  if (c.ccl.margin < -1.0 || c.ccl.margin > 1.0) throw ConfigError("loss.margin must lie in [-1, 1]");
  if (!(c.debias.lambda_n > 0.0)) throw ConfigError("loss.lambda_n must be > 0");
  if (c.debias.alpha < 0.0) throw ConfigError("loss.alpha must be >= 0");
  return c;
}

inline SamplerConfig sampler_config(const Json& cfg) {
  const Json& j = cfg.at("sampler");
  SamplerConfig s;
  s.kind = detail::config_parse([&] { return parse_sampler_kind(j.at("kind").get<std::string>()); });
  s.n_negatives = j.at("n_negatives").get<std::size_t>();
  s.m_positives = j.at("m_positives").get<std::size_t>();
  s.shared_negatives = j.at("shared_negatives").get<bool>();
  return s;
}

inline TrainConfig train_config(const Json& cfg) {
  const Json& j = cfg.at("train");
  TrainConfig t;
  t.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.initial_lr = j.at("initial_lr").get<double>();
  t.plateau_factor = j.at("plateau_factor").get<double>();
  t.plateau_patience = j.at("plateau_patience").get<std::size_t>();
  t.improvement_threshold = j.at("improvement_threshold").get<double>();
  t.min_lr = j.at("min_lr").get<double>();
  t.l2_weight = j.at("l2_weight").get<double>();
  t.max_epochs = j.at("max_epochs").get<std::size_t>();
  t.init_std = j.at("init_std").get<double>();
  const auto mode = j.at("score_mode").get<std::string>();
  if (mode == "dot") t.score_mode = ScoreMode::dot;
  else if (mode == "cosine") t.score_mode = ScoreMode::cosine;
  else if (mode != "auto") throw ConfigError("train.score_mode must be auto, dot or cosine");
  t.temperature = j.at("temperature").get<double>();
  t.eval_k = j.at("eval_k").get<std::size_t>();
  t.seed = cfg.at("seed").get<std::uint64_t>();
  t.loss = loss_config(cfg);
  t.sampler = sampler_config(cfg);
  const double vf = j.at("validation_fraction").get<double>();
  if (!(vf > 0.0 && vf < 1.0)) throw ConfigError("train.validation_fraction must lie in (0, 1)");
  t.validate();
  return t;
}

inline double validation_fraction(const Json& cfg) { return cfg.at("train").at("validation_fraction").get<double>(); }

enum class LinearModel { ials, ials_debiased, ease, ease_debiased };

inline LinearModel parse_linear_model(std::string_view s) {
  if (s == "ials") return LinearModel::ials;
  if (s == "ials-debiased") return LinearModel::ials_debiased;
  if (s == "ease") return LinearModel::ease;
  if (s == "ease-debiased") return LinearModel::ease_debiased;
  throw ConfigError("linear.model must be one of ials, ials-debiased, ease, ease-debiased");
}

inline IALSConfig ials_config(const Json& cfg, std::size_t num_users) {
  const Json& j = cfg.at("linear");
  IALSConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.alpha0 = j.at("alpha0").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.nu = j.at("nu").get<double>();
  c.sweeps = j.at("sweeps").get<std::size_t>();
  c.init_std = j.at("init_std").get<double>();
  c.seed = derive_seed(cfg.at("seed").get<std::uint64_t>(), "init");
  const double cu = j.at("c_u").get<double>();
  if (!(cu > 0.0)) throw ConfigError("linear.c_u must be > 0");
  c.c_u.assign(num_users, cu);
  return c;
}

inline PlantedBlockConfig synthetic_config(const Json& cfg) {
  const Json& j = cfg.at("synthetic");
  PlantedBlockConfig p;
  p.users = j.at("users").get<std::size_t>();
  p.items = j.at("items").get<std::size_t>();
  p.blocks = j.at("blocks").get<std::size_t>();
  p.in_block_rate = j.at("in_block_rate").get<double>();
  p.noise = j.at("noise").get<double>();
  p.test_fraction = j.at("test_fraction").get<double>();
  p.seed = derive_seed(cfg.at("seed").get<std::uint64_t>(), "synthetic");
  return p;
}

/// Geometric grid lo, lo*ratio, ... up to hi (inclusive within rounding).
inline std::vector<double> geometric_grid(double lo, double hi, double ratio) {
  if (!(lo > 0.0 && hi >= lo && ratio > 1.0)) throw ConfigError("geometric grid needs 0 < lo <= hi and ratio > 1");
  std::vector<double> out;
  const auto steps = static_cast<int>(std::floor(std::log(hi / lo) / std::log(ratio) + 1e-9));
  for (int s = 0; s <= steps; ++s) out.push_back(lo * std::pow(ratio, s));
  return out;
}

}  // namespace recloss
