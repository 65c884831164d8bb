#include "geode/harness/pipeline.hpp"

namespace geode {

StageOneResult run_stage_one(const DataSet& data, const RunConfig& config) {
  TreeOptions topt;
  topt.max_depth = config.hyper.L;
  topt.min_cell_size = config.min_cell_size > 0 ? config.min_cell_size : 2 * config.hyper.d_upper;
  topt.max_lloyd_iters = config.max_lloyd_iters;
  topt.seed = derive_seed(config.hyper.seed, 1);

  DictionaryOptions dopt;
  dopt.d_upper = config.hyper.d_upper;
  dopt.svd.oversample = config.oversample;
  dopt.svd.power_iters = config.power_iters;
  dopt.impute_sweeps = config.impute_sweeps;
  dopt.threads = config.threads;
  dopt.seed = derive_seed(config.hyper.seed, 2);

  StageOneResult out;
  out.tree = build_tree(data, topt);
  out.dict = fit_dictionary(out.tree, data, dopt);
  out.stats = precompute_stats(out.dict, out.tree, data, config.threads);
  return out;
}

FittedModel fit_model(const DataSet& data, const RunConfig& config, const IterationObserver& observer) {
  config.validate();
  StageOneResult s1 = run_stage_one(data, config);
  const SamplerContext ctx{s1.tree, s1.dict, s1.stats, data, config.hyper};
  GibbsRun run = run_gibbs(ctx, observer);
  return FittedModel{std::move(s1.tree), std::move(s1.dict), config.hyper, std::move(run.draws)};
}

}  // namespace geode
