#pragma once

// End-to-end training loop (sustained boosting + adaptive classifier
// assignment), evaluation with late fusion, sweeps, and run logs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sboost/aca.hpp"
#include "sboost/boost_loss.hpp"
#include "sboost/config.hpp"
#include "sboost/data.hpp"
#include "sboost/metrics.hpp"
#include "sboost/model.hpp"
#include "sboost/optim.hpp"

namespace sboost {

struct EvalReport {
  MetricsReport multi;
  std::vector<MetricsReport> per_modality;
  double fused_ce = 0.0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  std::vector<TermValues> per_modality;
  double joint = 0.0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct ACAEvent {
  std::size_t iteration = 0;
  std::vector<double> scores;
  std::string action;  // "none", "add:<modality>", "capped:<modality>"
  std::optional<std::size_t> added;  // modality index when a classifier was appended

  friend bool operator==(const ACAEvent&, const ACAEvent&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  double lr = 0.0;
  std::vector<double> train_loss;  // epoch-mean L per modality
  std::vector<std::size_t> classifier_counts;
  std::optional<EvalReport> eval;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunLog {
  std::vector<std::string> modalities;
  std::size_t aca_period = 0;
  std::vector<IterationRecord> iterations;
  std::vector<ACAEvent> aca_events;
  std::vector<EpochRecord> epochs;
  GapTrace gap;

  // Confidence series of modality o, one point per ACA check.
  std::vector<double> confidence_series(std::size_t o) const {
    std::vector<double> s;
    for (const auto& e : aca_events) s.push_back(e.scores.at(o));
    return s;
  }

  std::size_t additions(std::size_t o) const {
    return static_cast<std::size_t>(
        std::count_if(aca_events.begin(), aca_events.end(), [o](const ACAEvent& e) { return e.added == o; }));
  }

  friend bool operator==(const RunLog&, const RunLog&) = default;
};

class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, MultimodalModel last_good, RunLog log)
      : std::runtime_error(what), last_good_(std::move(last_good)), log_(std::move(log)) {}
  const MultimodalModel& last_good() const { return last_good_; }
  const RunLog& log() const { return log_; }

 private:
  MultimodalModel last_good_;
  RunLog log_;
};

inline Splits prepare_data(const ExperimentConfig& cfg) {
  Dataset all = cfg.data.source == "file" ? load_features(cfg.data.path) : gen_synthetic(cfg.data.synthetic);
  return split(all, cfg.data.train_frac, cfg.data.val_frac, cfg.data.split_seed);
}

inline ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& d) {
  ModelSpec spec;
  spec.num_classes = d.num_classes;
  spec.hidden = cfg.model.hidden;
  for (std::size_t o = 0; o < d.num_modalities(); ++o) {
    EncoderSpec e{d.dim(o), cfg.model.encoder_hidden, cfg.model.feature_dim};
    spec.modalities.push_back({d.names[o], e});
  }
  return spec;
}

inline void check_compatible(const MultimodalModel& model, const Dataset& d) {
  if (model.num_classes() != d.num_classes) throw std::invalid_argument("evaluate: class count mismatch");
  if (model.num_modalities() != d.num_modalities()) throw std::invalid_argument("evaluate: modality count mismatch");
  for (std::size_t o = 0; o < d.num_modalities(); ++o) {
    if (model.modality(o).name != d.names[o] || model.modality(o).encoder.input_dim != d.dim(o))
      throw std::invalid_argument("evaluate: modality '" + d.names[o] + "' does not match the model");
  }
}

// Per-modality ensemble predictions over the whole dataset.
inline std::vector<Matrix> modality_predictions(MultimodalModel& model, const Dataset& d, EnsembleMode mode) {
  std::vector<Matrix> out;
  for (std::size_t o = 0; o < d.num_modalities(); ++o) {
    const auto stack = predict_stack_values(model, o, d.features[o]);
    out.push_back(ensemble_prediction(stack, mode));
  }
  return out;
}

// Late fusion: sum of present modalities' ensemble predictions; absent
// modalities are skipped per sample.
inline EvalReport evaluate(MultimodalModel& model, const Dataset& d, EnsembleMode fusion = EnsembleMode::kMean) {
  check_compatible(model, d);
  if (d.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const auto preds = modality_predictions(model, d, fusion);
  EvalReport r;
  Matrix fused(d.size(), d.num_classes);
  std::vector<std::size_t> n_present(d.size(), 0);
  for (std::size_t o = 0; o < preds.size(); ++o) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!d.present[o][i]) continue;
      ++n_present[i];
      auto src = preds[o].row(i);
      auto dst = fused.row(i);
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d.present[o][i]) idx.push_back(i);
    if (idx.empty()) {
      r.per_modality.push_back(MetricsReport{});
      continue;
    }
    Matrix sub(idx.size(), d.num_classes);
    std::vector<std::size_t> truth;
    for (std::size_t r2 = 0; r2 < idx.size(); ++r2) {
      auto src = preds[o].row(idx[r2]);
      std::copy(src.begin(), src.end(), sub.row(r2).begin());
      truth.push_back(d.labels[idx[r2]]);
    }
    r.per_modality.push_back(report_from_scores(sub, truth));
  }
  r.multi = report_from_scores(fused, d.labels);
  double ce = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double denom = n_present[i] == 0 ? 1.0 : static_cast<double>(n_present[i]);
    double p = fused(i, d.labels[i]) / denom;
    if (n_present[i] == 0) p = 1.0 / static_cast<double>(d.num_classes);
    if (fusion == EnsembleMode::kSum) {
      double row = 0.0;
      for (double v : fused.row(i)) row += v;
      if (row > 0.0) p = fused(i, d.labels[i]) / row;
    }
    ce -= std::log(std::max(p, kLogFloor));
  }
  r.fused_ce = ce / static_cast<double>(d.size());
  return r;
}

inline EvalReport evaluate(MultimodalModel& model, const Dataset& d, const PerturbationSpec& p,
                           EnsembleMode fusion = EnsembleMode::kMean) {
  return evaluate(model, p.is_identity() ? d : perturb(d, p), fusion);
}

// CE against y of the ensembles of the first t classifiers of modality o,
// for t = 1..n^o.
inline std::vector<double> prefix_ensemble_ce(MultimodalModel& model, std::size_t o, const Dataset& d,
                                              EnsembleMode mode = EnsembleMode::kMean) {
  const auto stack = predict_stack_values(model, o, d.features[o]);
  std::vector<double> out;
  for (std::size_t t = 1; t <= stack.size(); ++t) {
    const Matrix e = ensemble_prediction(std::span<const Matrix>(stack).first(t), mode);
    double ce = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) ce -= std::log(std::max(e(i, d.labels[i]), kLogFloor));
    out.push_back(ce / static_cast<double>(d.size()));
  }
  return out;
}

inline std::size_t iterations_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

inline std::size_t aca_period_iterations(const ExperimentConfig& cfg, std::size_t n_train) {
  if (cfg.aca_period_iters > 0) return cfg.aca_period_iters;
  const double it = cfg.aca_period_epochs * static_cast<double>(iterations_per_epoch(n_train, cfg.batch_size));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(it)));
}

struct TrainResult {
  MultimodalModel model;
  RunLog log;
};

inline std::string action_string(const ACADecision& d, const MultimodalModel& m) {
  if (d.capped) return "capped:" + m.modality(d.modality).name;
  if (d.adds()) return "add:" + m.modality(d.modality).name;
  return "none";
}

// Runs the learning loop: per mini-batch, forward every modality's stack,
// minimize the joint loss with SGD, and every `period` iterations run the
// classifier-assignment check on confidence accumulated since the last one.
// Cap warnings go to `warnings` (nullptr silences them).
inline TrainResult train(const ExperimentConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                         std::ostream* warnings = &std::cerr) {
  validate(cfg);
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  Rng init_rng(mix_seed(cfg.seed, 1));
  Rng batch_rng(mix_seed(cfg.seed, 2));
  Rng grow_rng(mix_seed(cfg.seed, 3));

  MultimodalModel model(model_spec(cfg, train_set), init_rng);
  RunLog log;
  log.modalities = train_set.names;
  ACAConfig aca = cfg.aca;
  aca.period = aca_period_iterations(cfg, train_set.size());
  log.aca_period = aca.period;

  const Dataset& monitor = val_set.size() > 0 ? val_set : train_set;
  ConfidenceAccumulator acc(train_set.num_modalities());
  LRScheduleState sched = LRScheduleState::initial(cfg.optim);
  MultimodalModel last_good = model;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t iteration = 0;
  bool grew = false;
  std::vector<bool> cap_warned(train_set.num_modalities(), false);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng);
    std::vector<double> epoch_loss(train_set.num_modalities(), 0.0);
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      ++iteration;
      const std::span<const std::size_t> batch(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      std::vector<Matrix> inputs;
      for (std::size_t o = 0; o < train_set.num_modalities(); ++o) inputs.push_back(train_set.rows(o, batch));
      const Matrix y = train_set.one_hot(batch);

      Tape tp;
      ForwardResult fr = forward_loss(tp, model, inputs, y, cfg.loss);
      if (!std::isfinite(fr.breakdown.joint)) {
        throw NumericFailure("non-finite loss at iteration " + std::to_string(iteration), last_good, log);
      }
      tp.backward(fr.joint);
      if (aca.enabled) {
        std::vector<std::vector<Matrix>> stacks;
        for (const auto& s : fr.stacks) {
          std::vector<Matrix> vals;
          for (Var v : s) vals.push_back(tp.value(v));
          stacks.push_back(std::move(vals));
        }
        std::vector<std::size_t> labels(batch.begin(), batch.end());
        for (auto& l : labels) l = train_set.labels[l];
        acc.add_batch(stacks, labels);
      }
      try {
        const auto params = model.parameters();
        sgd_step(params, cfg.optim, sched.current_lr);
      } catch (const NumericError& e) {
        throw NumericFailure(std::string(e.what()) + " at iteration " + std::to_string(iteration), last_good, log);
      }

      IterationRecord rec{iteration, epoch, sched.current_lr, fr.breakdown.per_modality, fr.breakdown.joint};
      for (std::size_t o = 0; o < epoch_loss.size(); ++o) epoch_loss[o] += rec.per_modality[o].total;
      ++epoch_batches;
      log.iterations.push_back(std::move(rec));

      if (aca.enabled && iteration % aca.period == 0) {
        const ACADecision d = maybe_check(iteration, aca, model, acc, grow_rng);
        ACAEvent ev{iteration, d.scores, action_string(d, model), std::nullopt};
        if (d.adds()) {
          ev.added = d.modality;
          grew = true;
        }
        if (d.capped && !cap_warned[d.modality]) {
          cap_warned[d.modality] = true;
          if (warnings) *warnings << "warning: iteration " << iteration << ": classifier cap reached for modality '"
                    << model.modality(d.modality).name << "'\n";
        }
        log.aca_events.push_back(std::move(ev));
      }
    }

    EpochRecord er;
    er.epoch = epoch;
    er.iteration = iteration;
    er.lr = sched.current_lr;
    for (double& l : epoch_loss) l /= static_cast<double>(std::max<std::size_t>(1, epoch_batches));
    er.train_loss = epoch_loss;
    for (const auto& m : model.modalities()) er.classifier_counts.push_back(m.count());
    if (epoch_loss.size() >= 2) log.gap.push_back(GapPoint{iteration, epoch_loss[0], epoch_loss[1], gap(epoch_loss[0], epoch_loss[1])});
    if ((epoch + 1) % cfg.eval_every == 0) {
      er.eval = evaluate(model, monitor, cfg.fusion);
      if (grew) sched = plateau_rebase(sched);
      grew = false;
      sched = plateau_update(sched, er.eval->fused_ce, cfg.optim);
    }
    log.epochs.push_back(std::move(er));
    last_good = model;
  }
  return TrainResult{std::move(model), std::move(log)};
}

inline TrainResult train(const ExperimentConfig& cfg) {
  const Splits s = prepare_data(cfg);
  return train(cfg, s.train, s.val);
}

// Configuration transforms for the comparison runs.
inline ExperimentConfig baseline_config(ExperimentConfig c) {
  c.aca.enabled = false;
  c.loss.terms = LossTerms{false, true, false};
  return c;
}

enum class SweepParam { kSigma, kLambda, kMaxClassifiers };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "sigma") return SweepParam::kSigma;
  if (s == "lambda") return SweepParam::kLambda;
  if (s == "max_classifiers") return SweepParam::kMaxClassifiers;
  throw ConfigError("sweep: unknown parameter '" + s + "' (expected sigma, lambda, max_classifiers)");
}

inline const char* sweep_param_name(SweepParam p) {
  switch (p) {
    case SweepParam::kSigma: return "sigma";
    case SweepParam::kLambda: return "lambda";
    case SweepParam::kMaxClassifiers: return "max_classifiers";
  }
  return "?";
}

inline ExperimentConfig with_param(ExperimentConfig c, SweepParam p, double v) {
  switch (p) {
    case SweepParam::kSigma: c.aca.sigma = v; break;
    case SweepParam::kLambda: c.loss.lambda = v; break;
    case SweepParam::kMaxClassifiers: c.aca.max_classifiers = static_cast<std::size_t>(std::llround(v)); break;
  }
  return c;
}

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  EvalReport test;
  std::vector<std::size_t> classifier_counts;
};

// One train + test evaluation per (value, seed); splits are fixed by the
// base config.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepParam p, std::span<const double> values,
                                   std::span<const std::uint64_t> seeds, std::ostream* warnings = &std::cerr) {
  if (values.empty()) throw ConfigError("sweep: empty value list");
  const Splits s = prepare_data(base);
  std::vector<SweepRow> rows;
  for (double v : values) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = with_param(base, p, v);
      c.seed = seed;
      TrainResult tr = train(c, s.train, s.val, warnings);
      SweepRow row{v, seed, evaluate(tr.model, s.test, c.fusion), {}};
      for (const auto& m : tr.model.modalities()) row.classifier_counts.push_back(m.count());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void write_sweep_csv(std::span<const SweepRow> rows, SweepParam p, const std::vector<std::string>& names,
                            std::ostream& os) {
  os << sweep_param_name(p) << ",seed,accuracy,map,macro_f1";
  for (const auto& n : names) os << ",acc_" << n << ",n_" << n;
  os << '\n';
  os.precision(10);
  for (const auto& r : rows) {
    os << r.value << ',' << r.seed << ',' << r.test.multi.accuracy << ',' << r.test.multi.map << ','
       << r.test.multi.macro_f1;
    for (std::size_t o = 0; o < names.size(); ++o)
      os << ',' << r.test.per_modality[o].accuracy << ',' << r.classifier_counts[o];
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Run log files
// ---------------------------------------------------------------------------

inline Json to_json(const MetricsReport& m) {
  return Json{{"accuracy", m.accuracy}, {"map", m.map}, {"macro_f1", m.macro_f1}};
}

inline Json to_json(const EvalReport& r, const std::vector<std::string>& names) {
  Json per = Json::object();
  for (std::size_t o = 0; o < names.size(); ++o) per[names[o]] = to_json(r.per_modality[o]);
  return Json{{"multi", to_json(r.multi)}, {"per_modality", per}, {"fused_ce", r.fused_ce}};
}

inline void write_run_log(const RunLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& names = log.modalities;
  {
    std::ofstream os(dir / "iterations.csv");
    os.precision(17);
    os << "iteration,epoch,lr";
    for (const auto& n : names) os << ",eps_" << n << ",eps_all_" << n << ",eps_pre_" << n << ",L_" << n;
    os << ",joint\n";
    for (const auto& r : log.iterations) {
      os << r.iteration << ',' << r.epoch << ',' << r.lr;
      for (const auto& t : r.per_modality) os << ',' << t.eps << ',' << t.eps_all << ',' << t.eps_pre << ',' << t.total;
      os << ',' << r.joint << '\n';
    }
  }
  {
    std::ofstream os(dir / "aca_events.csv");
    os.precision(17);
    os << "iteration";
    for (const auto& n : names) os << ",s_" << n;
    os << ",action\n";
    for (const auto& e : log.aca_events) {
      os << e.iteration;
      for (double s : e.scores) os << ',' << s;
      os << ',' << e.action << '\n';
    }
  }
  {
    std::ofstream os(dir / "epochs.csv");
    os.precision(17);
    os << "epoch,iteration,lr";
    for (const auto& n : names) os << ",L_" << n << ",n_" << n << ",acc_" << n;
    os << ",acc_multi,map_multi,f1_multi,fused_ce\n";
    for (const auto& e : log.epochs) {
      os << e.epoch << ',' << e.iteration << ',' << e.lr;
      for (std::size_t o = 0; o < names.size(); ++o) {
        os << ',' << e.train_loss[o] << ',' << e.classifier_counts[o] << ',';
        if (e.eval) os << e.eval->per_modality[o].accuracy;
      }
      if (e.eval) {
        os << ',' << e.eval->multi.accuracy << ',' << e.eval->multi.map << ',' << e.eval->multi.macro_f1 << ','
           << e.eval->fused_ce << '\n';
      } else {
        os << ",,,,\n";
      }
    }
  }
  {
    std::ofstream os(dir / "gap.csv");
    os.precision(17);
    os << "iteration,L_a,L_v,G\n";
    for (const auto& g : log.gap) os << g.iteration << ',' << g.loss_a << ',' << g.loss_v << ',' << g.g << '\n';
  }
}

inline Json run_summary(const ExperimentConfig& cfg, const TrainResult& tr, const std::optional<EvalReport>& test) {
  Json counts = Json::object();
  Json fluct = Json::object();
  for (std::size_t o = 0; o < tr.log.modalities.size(); ++o) {
    counts[tr.log.modalities[o]] = tr.model.modality(o).count();
    const auto s = tr.log.confidence_series(o);
    fluct[tr.log.modalities[o]] = s.size() >= 2 ? Json(confidence_fluctuation(s)) : Json(nullptr);
  }
  Json j{{"config", to_json(cfg)},
         {"iterations", tr.log.iterations.size()},
         {"aca_period", tr.log.aca_period},
         {"aca_checks", tr.log.aca_events.size()},
         {"classifier_counts", counts},
         {"confidence_fluctuation", fluct}};
  if (!tr.log.epochs.empty() && tr.log.epochs.back().eval)
    j["final_val"] = to_json(*tr.log.epochs.back().eval, tr.log.modalities);
  if (test) j["test"] = to_json(*test, tr.log.modalities);
  return j;
}

}  // namespace sboost
