// Command-line front end: train, eval, sweep, theory, gen-data.
//
// Exit codes: 0 ok, 2 config/input error, 3 numeric failure, 4 theory bound
// violated, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sboost/sboost.hpp"

namespace fs = std::filesystem;
using namespace sboost;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitBound = 4;

// Flag values; an option only overrides the config when it was given.
struct Overrides {
  std::string config_path;
  std::string data_path;
  std::vector<std::string> modalities;  // name:dim:separation:noise
  std::size_t num_samples = 0, num_classes = 0;
  std::uint64_t data_seed = 0, split_seed = 0;
  double train_frac = 0, val_frac = 0;
  std::size_t hidden = 0, feature_dim = 0;
  std::vector<std::size_t> encoder_hidden;
  double lr = 0, momentum = 0, weight_decay = 0;
  int patience = 0;
  double sigma = 0, tau = 0, period_epochs = 0, lambda = 0;
  std::size_t period_iters = 0, max_classifiers = 0;
  std::string rule, terms, fusion, ensemble;
  bool no_aca = false;
  std::size_t epochs = 0, batch_size = 0, eval_every = 0;
  std::uint64_t seed = 0;
  std::string out;

  std::vector<CLI::Option*> given;
  CLI::Option* opt(CLI::Option* o) {
    given.push_back(o);
    return o;
  }
};

void add_data_flags(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  o.opt(app.add_option("--data", o.data_path, "feature file (replaces the synthetic source)"));
  o.opt(app.add_option("--modality", o.modalities, "synthetic modality name:dim:separation:noise (repeatable)"));
  o.opt(app.add_option("--num-samples", o.num_samples));
  o.opt(app.add_option("--num-classes", o.num_classes));
  o.opt(app.add_option("--data-seed", o.data_seed));
  o.opt(app.add_option("--split-seed", o.split_seed));
  o.opt(app.add_option("--train-frac", o.train_frac));
  o.opt(app.add_option("--val-frac", o.val_frac));
}

void add_train_flags(CLI::App& app, Overrides& o) {
  add_data_flags(app, o);
  o.opt(app.add_option("--hidden", o.hidden, "configurable-classifier width"));
  o.opt(app.add_option("--feature-dim", o.feature_dim, "encoder output width, 0 = identity"));
  o.opt(app.add_option("--encoder-hidden", o.encoder_hidden, "encoder MLP hidden widths"));
  o.opt(app.add_option("--lr", o.lr));
  o.opt(app.add_option("--momentum", o.momentum));
  o.opt(app.add_option("--weight-decay", o.weight_decay));
  o.opt(app.add_option("--plateau-patience", o.patience));
  o.opt(app.add_option("--sigma", o.sigma));
  o.opt(app.add_option("--tau", o.tau));
  o.opt(app.add_option("--aca-period-epochs", o.period_epochs));
  o.opt(app.add_option("--aca-period-iters", o.period_iters));
  o.opt(app.add_option("--max-classifiers", o.max_classifiers));
  o.opt(app.add_option("--aca-rule", o.rule)->check(CLI::IsMember({"text", "algorithm1"})));
  o.opt(app.add_flag("--no-aca", o.no_aca, "disable classifier assignment"));
  o.opt(app.add_option("--lambda", o.lambda));
  o.opt(app.add_option("--terms", o.terms, "enabled loss terms, e.g. eps,eps_all,eps_pre"));
  o.opt(app.add_option("--ensemble", o.ensemble)->check(CLI::IsMember({"mean", "sum"})));
  o.opt(app.add_option("--fusion", o.fusion)->check(CLI::IsMember({"mean", "sum"})));
  o.opt(app.add_option("--epochs", o.epochs));
  o.opt(app.add_option("--batch-size", o.batch_size));
  o.opt(app.add_option("--eval-every", o.eval_every));
  o.opt(app.add_option("--out", o.out, "output directory"));
}

bool given(const Overrides& o, const std::string& name) {
  for (const CLI::Option* opt : o.given)
    if (opt->check_lname(name) && opt->count() > 0) return true;
  return false;
}

SyntheticModality parse_modality(const std::string& s) {
  const auto parts = detail::split_on(s, ':');
  if (parts.size() != 4) throw ConfigError("--modality expects name:dim:separation:noise, got '" + s + "'");
  try {
    return SyntheticModality{parts[0], std::stoul(parts[1]), std::stod(parts[2]), std::stod(parts[3])};
  } catch (const std::exception&) {
    throw ConfigError("--modality: bad number in '" + s + "'");
  }
}

LossTerms parse_terms(const std::string& s) {
  LossTerms t{false, false, false};
  for (const auto& name : detail::split_on(s, ',')) {
    if (name == "eps") t.eps = true;
    else if (name == "eps_all") t.eps_all = true;
    else if (name == "eps_pre") t.eps_pre = true;
    else throw ConfigError("--terms: unknown term '" + name + "'");
  }
  return t;
}

ExperimentConfig build_config(const Overrides& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig::desk_default() : load_config(o.config_path);
  auto has = [&](const char* n) { return given(o, n); };
  if (has("data")) {
    c.data.source = "file";
    c.data.path = o.data_path;
  }
  if (has("modality")) {
    c.data.synthetic.modalities.clear();
    for (const auto& m : o.modalities) c.data.synthetic.modalities.push_back(parse_modality(m));
  }
  if (has("num-samples")) c.data.synthetic.num_samples = o.num_samples;
  if (has("num-classes")) c.data.synthetic.num_classes = o.num_classes;
  if (has("data-seed")) c.data.synthetic.seed = o.data_seed;
  if (has("split-seed")) c.data.split_seed = o.split_seed;
  if (has("train-frac")) c.data.train_frac = o.train_frac;
  if (has("val-frac")) c.data.val_frac = o.val_frac;
  if (has("hidden")) c.model.hidden = o.hidden;
  if (has("feature-dim")) c.model.feature_dim = o.feature_dim;
  if (has("encoder-hidden")) c.model.encoder_hidden = o.encoder_hidden;
  if (has("lr")) c.optim.lr = o.lr;
  if (has("momentum")) c.optim.momentum = o.momentum;
  if (has("weight-decay")) c.optim.weight_decay = o.weight_decay;
  if (has("plateau-patience")) c.optim.plateau_patience = o.patience;
  if (has("sigma")) c.aca.sigma = o.sigma;
  if (has("tau")) c.aca.tau = o.tau;
  if (has("aca-period-epochs")) c.aca_period_epochs = o.period_epochs;
  if (has("aca-period-iters")) c.aca_period_iters = o.period_iters;
  if (has("max-classifiers")) c.aca.max_classifiers = o.max_classifiers;
  if (has("aca-rule")) c.aca.rule = o.rule == "text" ? ACARule::kText : ACARule::kAlgorithm1;
  if (o.no_aca) c.aca.enabled = false;
  if (has("lambda")) c.loss.lambda = o.lambda;
  if (has("terms")) c.loss.terms = parse_terms(o.terms);
  if (has("ensemble")) c.loss.ensemble = o.ensemble == "sum" ? EnsembleMode::kSum : EnsembleMode::kMean;
  if (has("fusion")) c.fusion = o.fusion == "sum" ? EnsembleMode::kSum : EnsembleMode::kMean;
  if (has("epochs")) c.epochs = o.epochs;
  if (has("batch-size")) c.batch_size = o.batch_size;
  if (has("eval-every")) c.eval_every = o.eval_every;
  if (has("out")) c.output_dir = o.out;
  // Round-trip through JSON so flag values get the same validation as files.
  return config_from_json(to_json(c));
}

std::size_t resolve_modality(const Dataset& d, const std::string& name) {
  if (name.empty()) return d.num_modalities() - 1;
  if (auto o = d.find(name)) return *o;
  throw ConfigError("unknown modality '" + name + "'");
}

void write_json(const Json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

fs::path output_dir(const ExperimentConfig& c, const std::string& fallback) {
  const fs::path dir = c.output_dir.empty() ? fs::path(fallback) : fs::path(c.output_dir);
  fs::create_directories(dir);
  return dir;
}

int cmd_train(const Overrides& o) {
  ExperimentConfig cfg = build_config(o);
  cfg.seed = o.seed;
  const fs::path dir = output_dir(cfg, "runs/seed" + std::to_string(cfg.seed));
  write_json(to_json(cfg), dir / "config.json");
  const Splits s = prepare_data(cfg);
  try {
    TrainResult tr = train(cfg, s.train, s.val);
    std::optional<EvalReport> test;
    if (s.test.size() > 0) test = evaluate(tr.model, s.test, cfg.fusion);
    save_checkpoint(tr.model, (dir / "model.ckpt").string());
    write_run_log(tr.log, dir);
    const Json summary = run_summary(cfg, tr, test);
    write_json(summary, dir / "summary.json");
    std::cout << summary.dump(2) << '\n';
  } catch (const NumericFailure& e) {
    save_checkpoint(e.last_good(), (dir / "last_good.ckpt").string());
    write_run_log(e.log(), dir);
    std::cerr << "numeric failure: " << e.what() << " (last good model: " << (dir / "last_good.ckpt").string()
              << ")\n";
    return kExitNumeric;
  }
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::string split = "test";
  std::string modality;
  double noise_rate = 0, noise_scale = 1.0, missing_rate = 0;
  std::uint64_t perturb_seed = 0;
  CLI::Option *o_modality = nullptr, *o_noise = nullptr, *o_scale = nullptr, *o_missing = nullptr, *o_seed = nullptr;
};

int cmd_eval(const Overrides& o, const EvalFlags& e) {
  const ExperimentConfig cfg = build_config(o);
  MultimodalModel model = load_checkpoint(e.checkpoint);
  const Splits s = prepare_data(cfg);
  const Dataset& d = e.split == "train" ? s.train : e.split == "val" ? s.val : s.test;
  if (d.size() == 0) throw ConfigError("eval: split '" + e.split + "' is empty");
  // Perturbation flags override the config's perturbation block.
  PerturbationSpec p = cfg.perturbation;
  p.modality = resolve_modality(d, *e.o_modality ? e.modality : cfg.perturb_modality);
  if (*e.o_noise) p.noise_rate = e.noise_rate;
  if (*e.o_scale) p.noise_scale = e.noise_scale;
  if (*e.o_missing) p.missing_rate = e.missing_rate;
  if (*e.o_seed) p.seed = e.perturb_seed;
  try {
    p.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  const EvalReport r = evaluate(model, d, p, cfg.fusion);
  Json j = to_json(r, d.names);
  j["split"] = e.split;
  j["perturbation"] = {{"modality", d.names[p.modality]},
                       {"noise_rate", p.noise_rate},
                       {"noise_scale", p.noise_scale},
                       {"missing_rate", p.missing_rate},
                       {"seed", p.seed}};
  if (!cfg.output_dir.empty()) write_json(j, output_dir(cfg, "") / "eval.json");
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct SweepFlags {
  std::string param;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

int cmd_sweep(const Overrides& o, const SweepFlags& f) {
  const ExperimentConfig cfg = build_config(o);
  const SweepParam p = parse_sweep_param(f.param);
  const fs::path dir = output_dir(cfg, std::string("runs/sweep_") + sweep_param_name(p));
  std::vector<SweepRow> rows;
  try {
    rows = sweep(cfg, p, f.values, f.seeds);
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure during sweep: " << e.what() << '\n';
    return kExitNumeric;
  }
  const auto names = prepare_data(cfg).train.names;
  {
    std::ofstream os(dir / "sweep.csv");
    write_sweep_csv(rows, p, names, os);
  }
  Json table = Json::array();
  for (const auto& r : rows) table.push_back({{"value", r.value}, {"seed", r.seed}, {"test", to_json(r.test, names)}});
  const Json summary{{"config", to_json(cfg)}, {"param", sweep_param_name(p)}, {"rows", table}};
  write_json(summary, dir / "summary.json");
  write_sweep_csv(rows, p, names, std::cout);
  return 0;
}

struct TheoryFlags {
  std::vector<double> nus{0.5, 0.9, 1.0};
  std::vector<double> conditions{1.0, 10.0, 100.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t steps = 200;
  std::size_t dim = 8;
  double beta = 1.2;
  bool broken = false;
  std::string out;
};

int cmd_theory(const TheoryFlags& f) {
  theory::GridConfig g;
  g.nus = f.nus;
  g.conditions = f.conditions;
  g.seeds = f.seeds;
  g.steps = f.steps;
  g.dim = f.dim;
  g.beta = f.beta;
  g.mode = f.broken ? theory::DirectionMode::kAscent : theory::DirectionMode::kCompliant;
  for (double nu : g.nus) theory::check_nu_beta(nu, std::max(g.beta, nu));
  for (double c : g.conditions)
    if (!(c >= 1.0)) throw ConfigError("theory: condition numbers must be >= 1");
  const auto results = theory::run_grid(g);
  std::size_t bad = 0;
  Json cells = Json::array();
  if (!f.out.empty()) fs::create_directories(f.out);
  std::printf("nu,condition,seed,bound_ok,descent_ok,lemma_ok,worst_margin,checked\n");
  for (const auto& r : results) {
    bad += !r.ok();
    std::printf("%g,%g,%llu,%d,%d,%d,%.6g,%zu\n", r.point.nu, r.point.condition,
                static_cast<unsigned long long>(r.point.seed), r.bound.satisfied, r.descent_ok, r.lemma_ok,
                r.bound.worst_margin, r.bound.checked);
    cells.push_back({{"nu", r.point.nu},
                     {"condition", r.point.condition},
                     {"seed", r.point.seed},
                     {"ok", r.ok()},
                     {"bound_ok", r.bound.satisfied},
                     {"descent_ok", r.descent_ok},
                     {"lemma_ok", r.lemma_ok},
                     {"diverged", r.trace.diverged},
                     {"worst_descent_excess", r.trace.worst_descent_excess},
                     {"worst_lemma_excess", r.trace.worst_lemma_excess},
                     {"first_violation", r.bound.first_violation ? Json(*r.bound.first_violation) : Json(nullptr)}});
    if (!f.out.empty()) {
      std::ostringstream name;
      name << "trace_nu" << r.point.nu << "_cond" << r.point.condition << "_seed" << r.point.seed << ".csv";
      std::ofstream os(fs::path(f.out) / name.str());
      theory::write_trace_csv(r.trace, os);
    }
  }
  if (!f.out.empty()) write_json({{"cells", cells}, {"violations", bad}}, fs::path(f.out) / "summary.json");
  std::fprintf(stderr, "%zu of %zu grid cells violated a bound\n", bad, results.size());
  return bad == 0 ? 0 : kExitBound;
}

int cmd_gen_data(const Overrides& o, const std::string& path) {
  const ExperimentConfig cfg = build_config(o);
  const Dataset d = gen_synthetic(cfg.data.synthetic);
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_features(d, path);
  std::cerr << "wrote " << d.size() << " samples to " << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sustained boosting with adaptive classifier assignment"};
  app.require_subcommand(1);

  Overrides train_o, eval_o, sweep_o, gen_o;
  auto* train_cmd = app.add_subcommand("train", "train a model and write logs, checkpoint and summary");
  add_train_flags(*train_cmd, train_o);
  train_cmd->add_option("--seed", train_o.seed, "training seed")->required();

  EvalFlags ef;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint, optionally under perturbation");
  add_train_flags(*eval_cmd, eval_o);
  eval_cmd->add_option("--checkpoint", ef.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", ef.split)->check(CLI::IsMember({"train", "val", "test"}));
  ef.o_modality = eval_cmd->add_option("--perturb-modality", ef.modality, "default: last modality");
  ef.o_noise = eval_cmd->add_option("--noise-rate", ef.noise_rate, "percent of samples");
  ef.o_scale = eval_cmd->add_option("--noise-scale", ef.noise_scale, "multiple of feature std");
  ef.o_missing = eval_cmd->add_option("--missing-rate", ef.missing_rate, "percent of samples");
  ef.o_seed = eval_cmd->add_option("--perturb-seed", ef.perturb_seed);

  SweepFlags sf;
  auto* sweep_cmd = app.add_subcommand("sweep", "train and test once per (value, seed)");
  add_train_flags(*sweep_cmd, sweep_o);
  sweep_cmd->add_option("--param", sf.param)->required()->check(CLI::IsMember({"sigma", "lambda", "max_classifiers"}));
  sweep_cmd->add_option("--values", sf.values)->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", sf.seeds)->delimiter(',');

  TheoryFlags tf;
  auto* theory_cmd = app.add_subcommand("theory", "run the gap-convergence simulator grid");
  theory_cmd->add_option("--nus", tf.nus)->delimiter(',');
  theory_cmd->add_option("--conditions", tf.conditions)->delimiter(',');
  theory_cmd->add_option("--seeds", tf.seeds)->delimiter(',');
  theory_cmd->add_option("--steps", tf.steps, "T");
  theory_cmd->add_option("--dim", tf.dim);
  theory_cmd->add_option("--beta", tf.beta);
  theory_cmd->add_flag("--broken", tf.broken, "use an ascent direction (negative control)");
  theory_cmd->add_option("--out", tf.out, "directory for trace CSVs");

  std::string gen_path;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset as a feature file");
  add_data_flags(*gen_cmd, gen_o);
  gen_cmd->add_option("--out", gen_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_o);
    if (*eval_cmd) return cmd_eval(eval_o, ef);
    if (*sweep_cmd) return cmd_sweep(sweep_o, sf);
    if (*theory_cmd) return cmd_theory(tf);
    if (*gen_cmd) return cmd_gen_data(gen_o, gen_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
