#pragma once

// Experiment configuration and its JSON form. Every object rejects keys it
// does not know; a missing key keeps its default.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sboost/aca.hpp"
#include "sboost/boost_loss.hpp"
#include "sboost/data.hpp"
#include "sboost/optim.hpp"

namespace sboost {

using Json = nlohmann::json;

inline constexpr int kConfigSchema = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "file"
  std::string path;
  SyntheticSpec synthetic;
  double train_frac = 0.7;
  double val_frac = 0.1;
  std::uint64_t split_seed = 0;
};

struct ModelConfig {
  std::size_t hidden = 256;                  // configurable-classifier width
  std::vector<std::size_t> encoder_hidden;   // MLP hidden widths
  std::size_t feature_dim = 32;              // encoder output; 0 = identity encoder
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  OptimConfig optim;
  ACAConfig aca;
  double aca_period_epochs = 2.0;  // used when aca_period_iters == 0
  std::size_t aca_period_iters = 0;
  LossConfig loss;
  EnsembleMode fusion = EnsembleMode::kMean;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;  // epochs
  PerturbationSpec perturbation;
  std::string perturb_modality;  // name; empty = last modality
  std::string output_dir;

  static ExperimentConfig desk_default() {
    ExperimentConfig c;
    c.data.synthetic.num_samples = 2000;
    c.data.synthetic.num_classes = 6;
    c.data.synthetic.modalities = {{"a", 16, 3.0, 1.0}, {"v", 16, 1.0, 1.0}};
    c.model.hidden = 64;
    c.epochs = 20;
    c.aca.max_classifiers = 4;
    return c;
  }
};

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void get_if(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline EnsembleMode parse_mode(const std::string& s, const std::string& where) {
  if (s == "mean") return EnsembleMode::kMean;
  if (s == "sum") return EnsembleMode::kSum;
  throw ConfigError(where + ": expected 'mean' or 'sum', got '" + s + "'");
}

inline const char* mode_name(EnsembleMode m) { return m == EnsembleMode::kMean ? "mean" : "sum"; }

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  Json mods = Json::array();
  for (const auto& m : c.data.synthetic.modalities)
    mods.push_back({{"name", m.name}, {"dim", m.dim}, {"separation", m.separation}, {"noise", m.noise}});
  Json aca = {{"enabled", c.aca.enabled},
              {"sigma", c.aca.sigma},
              {"tau", c.aca.tau},
              {"period_epochs", c.aca_period_epochs},
              {"period_iters", c.aca_period_iters},
              {"rule", c.aca.rule == ACARule::kText ? "text" : "algorithm1"}};
  aca["max_classifiers"] = c.aca.max_classifiers ? Json(*c.aca.max_classifiers) : Json(nullptr);
  return Json{
      {"schema", kConfigSchema},
      {"data",
       {{"source", c.data.source},
        {"path", c.data.path},
        {"synthetic",
         {{"num_samples", c.data.synthetic.num_samples},
          {"num_classes", c.data.synthetic.num_classes},
          {"seed", c.data.synthetic.seed},
          {"modalities", mods}}},
        {"train_frac", c.data.train_frac},
        {"val_frac", c.data.val_frac},
        {"split_seed", c.data.split_seed}}},
      {"model",
       {{"hidden", c.model.hidden}, {"encoder_hidden", c.model.encoder_hidden}, {"feature_dim", c.model.feature_dim}}},
      {"optim",
       {{"lr", c.optim.lr},
        {"momentum", c.optim.momentum},
        {"weight_decay", c.optim.weight_decay},
        {"plateau_patience", c.optim.plateau_patience},
        {"plateau_min_rel_improve", c.optim.plateau_min_rel_improve},
        {"lr_decay_factor", c.optim.lr_decay_factor}}},
      {"aca", aca},
      {"loss",
       {{"lambda", c.loss.lambda},
        {"ensemble", detail::mode_name(c.loss.ensemble)},
        {"terms", {{"eps", c.loss.terms.eps}, {"eps_all", c.loss.terms.eps_all}, {"eps_pre", c.loss.terms.eps_pre}}}}},
      {"fusion", detail::mode_name(c.fusion)},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"eval_every", c.eval_every},
      {"perturbation",
       {{"modality", c.perturb_modality},
        {"noise_rate", c.perturbation.noise_rate},
        {"noise_scale", c.perturbation.noise_scale},
        {"missing_rate", c.perturbation.missing_rate},
        {"seed", c.perturbation.seed}}},
      {"output_dir", c.output_dir}};
}

inline void validate(const ExperimentConfig& c) {
  try {
    c.optim.validate();
    c.aca.validate();
    check_lambda(c.loss.lambda);
    c.perturbation.validate();
    if (c.data.source == "synthetic") {
      c.data.synthetic.validate();
    } else if (c.data.source == "file") {
      if (c.data.path.empty()) throw std::invalid_argument("data.path required for file source");
    } else {
      throw std::invalid_argument("data.source must be 'synthetic' or 'file'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!c.loss.terms.any()) throw ConfigError("loss.terms: at least one term must be enabled");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.model.hidden < 1) throw ConfigError("model.hidden must be >= 1");
  if (!c.model.encoder_hidden.empty() && c.model.feature_dim == 0)
    throw ConfigError("model.feature_dim must be >= 1 when encoder_hidden is set");
  if (c.data.train_frac <= 0.0 || c.data.val_frac < 0.0 || c.data.train_frac + c.data.val_frac > 1.0)
    throw ConfigError("data: need train_frac > 0, val_frac >= 0, train_frac + val_frac <= 1");
  if (c.aca_period_iters == 0 && !(c.aca_period_epochs > 0.0))
    throw ConfigError("aca: period_epochs must be > 0 when period_iters is 0");
  if (c.eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

inline ExperimentConfig config_from_json(const Json& j) {
  using detail::get_if;
  using detail::reject_unknown;
  ExperimentConfig c = ExperimentConfig::desk_default();
  reject_unknown(j,
                 {"schema", "data", "model", "optim", "aca", "loss", "fusion", "epochs", "batch_size", "seed",
                  "eval_every", "perturbation", "output_dir"},
                 "config");
  if (j.contains("schema") && j.at("schema") != kConfigSchema)
    throw ConfigError("config: unsupported schema " + j.at("schema").dump());
  if (j.contains("data")) {
    const Json& d = j.at("data");
    reject_unknown(d, {"source", "path", "synthetic", "train_frac", "val_frac", "split_seed"}, "data");
    get_if(d, "source", c.data.source, "data");
    get_if(d, "path", c.data.path, "data");
    get_if(d, "train_frac", c.data.train_frac, "data");
    get_if(d, "val_frac", c.data.val_frac, "data");
    get_if(d, "split_seed", c.data.split_seed, "data");
    if (d.contains("synthetic")) {
      const Json& s = d.at("synthetic");
      reject_unknown(s, {"num_samples", "num_classes", "seed", "modalities"}, "data.synthetic");
      get_if(s, "num_samples", c.data.synthetic.num_samples, "data.synthetic");
      get_if(s, "num_classes", c.data.synthetic.num_classes, "data.synthetic");
      get_if(s, "seed", c.data.synthetic.seed, "data.synthetic");
      if (s.contains("modalities")) {
        if (!s.at("modalities").is_array()) throw ConfigError("data.synthetic.modalities: expected an array");
        c.data.synthetic.modalities.clear();
        for (const Json& m : s.at("modalities")) {
          reject_unknown(m, {"name", "dim", "separation", "noise"}, "data.synthetic.modalities[]");
          SyntheticModality sm;
          get_if(m, "name", sm.name, "modality");
          get_if(m, "dim", sm.dim, "modality");
          get_if(m, "separation", sm.separation, "modality");
          get_if(m, "noise", sm.noise, "modality");
          if (sm.name.empty() || sm.name.find_first_of(".,:; ") != std::string::npos)
            throw ConfigError("modality name must be non-empty without '.,:; '");
          c.data.synthetic.modalities.push_back(sm);
        }
      }
    }
  }
  if (j.contains("model")) {
    const Json& m = j.at("model");
    reject_unknown(m, {"hidden", "encoder_hidden", "feature_dim"}, "model");
    get_if(m, "hidden", c.model.hidden, "model");
    get_if(m, "encoder_hidden", c.model.encoder_hidden, "model");
    get_if(m, "feature_dim", c.model.feature_dim, "model");
  }
  if (j.contains("optim")) {
    const Json& o = j.at("optim");
    reject_unknown(o, {"lr", "momentum", "weight_decay", "plateau_patience", "plateau_min_rel_improve", "lr_decay_factor"},
                   "optim");
    get_if(o, "lr", c.optim.lr, "optim");
    get_if(o, "momentum", c.optim.momentum, "optim");
    get_if(o, "weight_decay", c.optim.weight_decay, "optim");
    get_if(o, "plateau_patience", c.optim.plateau_patience, "optim");
    get_if(o, "plateau_min_rel_improve", c.optim.plateau_min_rel_improve, "optim");
    get_if(o, "lr_decay_factor", c.optim.lr_decay_factor, "optim");
  }
  if (j.contains("aca")) {
    const Json& a = j.at("aca");
    reject_unknown(a, {"enabled", "sigma", "tau", "period_epochs", "period_iters", "max_classifiers", "rule"}, "aca");
    get_if(a, "enabled", c.aca.enabled, "aca");
    get_if(a, "sigma", c.aca.sigma, "aca");
    get_if(a, "tau", c.aca.tau, "aca");
    get_if(a, "period_epochs", c.aca_period_epochs, "aca");
    get_if(a, "period_iters", c.aca_period_iters, "aca");
    if (a.contains("max_classifiers") && !a.at("max_classifiers").is_null()) {
      std::size_t cap = 0;
      get_if(a, "max_classifiers", cap, "aca");
      c.aca.max_classifiers = cap;
    }
    if (a.contains("rule")) {
      std::string r;
      get_if(a, "rule", r, "aca");
      if (r == "text") {
        c.aca.rule = ACARule::kText;
      } else if (r == "algorithm1") {
        c.aca.rule = ACARule::kAlgorithm1;
      } else {
        throw ConfigError("aca.rule: expected 'text' or 'algorithm1'");
      }
    }
  }
  if (j.contains("loss")) {
    const Json& l = j.at("loss");
    reject_unknown(l, {"lambda", "ensemble", "terms"}, "loss");
    get_if(l, "lambda", c.loss.lambda, "loss");
    if (l.contains("ensemble")) {
      std::string m;
      get_if(l, "ensemble", m, "loss");
      c.loss.ensemble = detail::parse_mode(m, "loss.ensemble");
    }
    if (l.contains("terms")) {
      const Json& t = l.at("terms");
      reject_unknown(t, {"eps", "eps_all", "eps_pre"}, "loss.terms");
      get_if(t, "eps", c.loss.terms.eps, "loss.terms");
      get_if(t, "eps_all", c.loss.terms.eps_all, "loss.terms");
      get_if(t, "eps_pre", c.loss.terms.eps_pre, "loss.terms");
    }
  }
  if (j.contains("fusion")) {
    std::string m;
    get_if(j, "fusion", m, "config");
    c.fusion = detail::parse_mode(m, "fusion");
  }
  get_if(j, "epochs", c.epochs, "config");
  get_if(j, "batch_size", c.batch_size, "config");
  get_if(j, "seed", c.seed, "config");
  get_if(j, "eval_every", c.eval_every, "config");
  get_if(j, "output_dir", c.output_dir, "config");
  if (j.contains("perturbation")) {
    const Json& p = j.at("perturbation");
    reject_unknown(p, {"modality", "noise_rate", "noise_scale", "missing_rate", "seed"}, "perturbation");
    get_if(p, "modality", c.perturb_modality, "perturbation");
    get_if(p, "noise_rate", c.perturbation.noise_rate, "perturbation");
    get_if(p, "noise_scale", c.perturbation.noise_scale, "perturbation");
    get_if(p, "missing_rate", c.perturbation.missing_rate, "perturbation");
    get_if(p, "seed", c.perturbation.seed, "perturbation");
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace sboost
