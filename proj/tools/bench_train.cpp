// Timing and accuracy probe for the comparison runs.
// usage: bench_train [config.json|-] [num_seeds] [variants]
// variants: comma list of full, base, ep_pre, all, all_pre

#include <chrono>
#include <cstdio>
#include <sstream>
#include <string>

#include "sboost/sboost.hpp"

namespace {

sboost::ExperimentConfig variant_config(const sboost::ExperimentConfig& cfg, const std::string& v) {
  sboost::ExperimentConfig c = cfg;
  if (v == "base") return sboost::baseline_config(cfg);
  if (v == "ep_pre") c.loss.terms = {true, false, true};
  if (v == "all") c.loss.terms = {false, true, false};
  if (v == "all_pre") c.loss.terms = {false, true, true};
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sboost;
  ExperimentConfig cfg =
      argc > 1 && std::string(argv[1]) != "-" ? load_config(argv[1]) : ExperimentConfig::desk_default();
  const int seeds = argc > 2 ? std::stoi(argv[2]) : 3;
  std::stringstream variants(argc > 3 ? argv[3] : "full,base");
  const Splits s = prepare_data(cfg);
  for (std::string v; std::getline(variants, v, ',');) {
    const ExperimentConfig c0 = variant_config(cfg, v);
    for (int seed = 1; seed <= seeds; ++seed) {
      ExperimentConfig c = c0;
      c.seed = static_cast<std::uint64_t>(seed);
      const auto t0 = std::chrono::steady_clock::now();
      TrainResult tr = train(c, s.train, s.val);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const EvalReport r = evaluate(tr.model, s.test, c.fusion);
      std::printf("%-7s seed=%d multi=%.4f", v.c_str(), seed, r.multi.accuracy);
      for (std::size_t o = 0; o < r.per_modality.size(); ++o)
        std::printf(" %s=%.4f(n=%zu)", tr.log.modalities[o].c_str(), r.per_modality[o].accuracy,
                    tr.model.modality(o).count());
      const EvalReport rt = evaluate(tr.model, s.train, c.fusion);
      std::printf(" train: multi=%.3f a=%.3f v=%.3f", rt.multi.accuracy, rt.per_modality[0].accuracy,
                  rt.per_modality.back().accuracy);
      std::string first = "-";
      for (const auto& e : tr.log.aca_events)
        if (e.added) {
          first = e.action;
          break;
        }
      std::printf(" first=%s time=%.2fs\n", first.c_str(), secs);
    }
  }
}
