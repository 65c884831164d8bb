#include "geode/harness/bench.hpp"
#include "geode/harness/config.hpp"
#include "geode/harness/matrix_io.hpp"
#include "geode/harness/model_file.hpp"
#include "geode/harness/mpcr.hpp"
#include "geode/harness/pipeline.hpp"
#include "geode/harness/scenarios.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>

using namespace geode;

namespace {

// Writes to --out when given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error(ErrorKind::IoError, "cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON settings file");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

RunConfig resolve_config(const Common& c) {
  RunConfig config = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) config.hyper.seed = *c.seed;
  if (c.threads) config.threads = *c.threads;
  return config;
}

void check_width(const DataSet& data, const FittedModel& model) {
  if (data.rows() > 0 && data.cols() != model.ambient_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "data has " + std::to_string(data.cols()) + " columns, model expects " +
                                                  std::to_string(model.ambient_dim()));
  }
}

int cmd_fit(const Common& c, const std::string& data_path, const std::string& log_path) {
  if (c.out.empty()) throw Error(ErrorKind::ConfigError, "fit needs --out");
  const RunConfig config = resolve_config(c);
  config.validate();
  const DataSet data = read_matrix(data_path);
  std::unique_ptr<std::ofstream> log;
  if (!log_path.empty()) {
    log = std::make_unique<std::ofstream>(log_path);
    if (!*log) throw Error(ErrorKind::IoError, "cannot write " + log_path);
  }
  IterationObserver observer;
  if (log) {
    observer = [&log](const IterationRecord& r) {
      nlohmann::json j{{"iter", r.iter},
                       {"sigma2", std::vector<double>(r.sigma2.data(), r.sigma2.data() + r.sigma2.size())},
                       {"retained", r.retained_total},
                       {"adapted", r.adapted},
                       {"deleted", r.outcome.deleted},
                       {"reinserted", r.outcome.reinserted}};
      *log << j.dump() << '\n';
    };
  }
  const FittedModel model = fit_model(data, config, observer);
  save_model(c.out, model, config);
  for (const std::string& w : model.tree.warnings()) std::cerr << "warning: " << w << '\n';
  std::cerr << "fitted " << data.rows() << " x " << data.cols() << ", depth " << model.tree.depth() << ", "
            << model.draws.snapshots.size() << " draws -> " << c.out << '\n';
  return 0;
}

int cmd_score(const Common& c, const std::string& model_path, const std::string& data_path) {
  const ModelBundle bundle = load_model(model_path);
  const DataSet data = read_matrix(data_path);
  check_width(data, bundle.model);
  Output out(c.out);
  std::ostream& os = out.stream();
  os << "row,log_density\n" << std::setprecision(17);
  for (Index i = 0; i < data.rows(); ++i) {
    os << i << ',' << log_density(bundle.model, data.row(i).transpose()) << '\n';
  }
  return 0;
}

int cmd_impute(const Common& c, const std::string& model_path, const std::string& data_path) {
  const ModelBundle bundle = load_model(model_path);
  const DataSet data = read_matrix(data_path);
  check_width(data, bundle.model);
  Rng rng(derive_seed(c.seed.value_or(bundle.config.hyper.seed), 3));
  Output out(c.out);
  std::ostream& os = out.stream();
  os << "row,column,mean,sd,lower,upper\n" << std::setprecision(17);
  for (Index i = 0; i < data.rows(); ++i) {
    if (data.missing_count(i) == 0) continue;
    const ImputationResult r = impute(bundle.model, data.row(i).transpose(), rng);
    for (const ImputedEntry& e : r.entries) {
      os << i << ',' << e.column << ',' << e.mean << ',' << e.sd << ',' << e.lower << ',' << e.upper << '\n';
    }
  }
  return 0;
}

int cmd_classify(const Common& c, const std::vector<std::string>& model_paths, const std::string& data_path) {
  std::vector<FittedModel> models;
  for (const std::string& p : model_paths) models.push_back(load_model(p).model);
  std::vector<const FittedModel*> ptrs;
  for (const FittedModel& m : models) ptrs.push_back(&m);
  for (const FittedModel& m : models) {
    if (m.ambient_dim() != models.front().ambient_dim()) {
      throw Error(ErrorKind::DimensionMismatch, "class models differ in dimension");
    }
  }
  const DataSet data = read_matrix(data_path);
  check_width(data, models.front());
  Output out(c.out);
  std::ostream& os = out.stream();
  os << "row,label";
  for (std::size_t k = 0; k < models.size(); ++k) os << ",vote_" << k;
  os << '\n' << std::setprecision(17);
  for (Index i = 0; i < data.rows(); ++i) {
    const ClassVote v = classify(ptrs, data.row(i).transpose());
    os << i << ',' << v.label;
    for (double p : v.distribution) os << ',' << p;
    os << '\n';
  }
  return 0;
}

int cmd_simulate(const Common& c, ScenarioSpec spec, const std::string& truth_path, const std::string& complete_path) {
  if (c.out.empty()) throw Error(ErrorKind::ConfigError, "simulate needs --out");
  if (c.seed) spec.seed = *c.seed;
  const ScenarioData data = simulate_scenario(spec);
  write_matrix(c.out, data.observed);
  if (!complete_path.empty()) write_matrix(complete_path, data.complete);
  if (!truth_path.empty()) {
    std::ofstream t(truth_path);
    if (!t) throw Error(ErrorKind::IoError, "cannot write " + truth_path);
    t << data.truth.dump(2) << '\n';
  }
  return 0;
}

int cmd_mpcr(const Common& c, const std::string& model_path, const std::string& train_path,
             const std::string& test_path, Index response, std::optional<int> scale) {
  const ModelBundle bundle = load_model(model_path);
  const DataSet train = read_matrix(train_path);
  const DataSet test = read_matrix(test_path);
  check_width(train, bundle.model);
  check_width(test, bundle.model);
  if (train.rows() != bundle.model.tree.sample_size()) {
    throw Error(ErrorKind::DimensionMismatch, "training file does not match the fitted tree");
  }
  Output out(c.out);
  std::ostream& os = out.stream();
  os << "scale,mse,fallback_cells\n" << std::setprecision(17);
  const int lo = scale ? *scale : 0;
  const int hi = scale ? *scale : bundle.model.tree.depth();
  for (int s = lo; s <= hi; ++s) {
    const MpcrResult r = mpcr_baseline(bundle.model.tree, bundle.model.dict, train, test.values(), response, s);
    for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
    os << s << ',' << r.mse << ',' << r.fallback_cells << '\n';
  }
  return 0;
}

BenchOptions load_bench_options(const Common& c) {
  BenchOptions o;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file " + c.config);
    nlohmann::json j;
    try {
      in >> j;
      for (const auto& [key, v] : j.items()) {
        if (key == "dims") {
          o.dims = v.get<std::vector<Index>>();
        } else if (key == "n") {
          o.n = v.get<Index>();
        } else if (key == "d_upper") {
          o.d_upper = v.get<int>();
        } else if (key == "L") {
          o.L = v.get<int>();
        } else if (key == "iters") {
          o.iters = v.get<int>();
        } else if (key == "repeats") {
          o.repeats = v.get<int>();
        } else {
          throw Error(ErrorKind::ConfigError, "unknown bench key '" + key + "'");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ConfigError, c.config + ": " + e.what());
    }
  }
  if (c.seed) o.seed = *c.seed;
  if (c.threads) o.threads = *c.threads;
  return o;
}

int cmd_bench(const Common& c) {
  const BenchReport report = run_bench(load_bench_options(c));
  const std::string text = bench_to_json(report).dump(2);
  if (c.out.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream f(c.out);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + c.out);
    f << text << '\n';
  }
  std::cerr << "stage-1 R^2 " << report.stage1_r2 << ", stage-2 spread " << report.stage2_spread << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale Bayesian density estimation"};
  app.require_subcommand(1);

  Common common;
  std::string data_path, model_path, log_path, truth_path, complete_path, train_path, test_path;
  std::vector<std::string> model_paths;
  ScenarioSpec spec;
  Index response = 0;
  std::optional<int> scale;

  auto* fit = app.add_subcommand("fit", "fit a model to a data file");
  add_common(fit, common);
  fit->add_option("--data", data_path, "training matrix")->required();
  fit->add_option("--log", log_path, "per-iteration JSON-lines log");

  auto* score = app.add_subcommand("score", "log-density of each row");
  add_common(score, common);
  score->add_option("--model", model_path)->required();
  score->add_option("--data", data_path)->required();

  auto* imp = app.add_subcommand("impute", "impute missing cells");
  add_common(imp, common);
  imp->add_option("--model", model_path)->required();
  imp->add_option("--data", data_path)->required();

  auto* cls = app.add_subcommand("classify", "vote over per-class models");
  add_common(cls, common);
  cls->add_option("--model", model_paths, "one model per class, in label order")->required();
  cls->add_option("--data", data_path)->required();

  auto* sim = app.add_subcommand("simulate", "generate a synthetic scenario");
  add_common(sim, common);
  sim->add_option("--scenario", spec.id, "1-9, threemix or parabola")->required();
  sim->add_option("--n", spec.n);
  sim->add_option("--D", spec.D);
  sim->add_option("--p", spec.p);
  sim->add_flag("--missing", spec.missing, "mask cells completely at random");
  sim->add_option("--missing-fraction", spec.missing_fraction);
  sim->add_option("--truth", truth_path, "generator parameters and labels (JSON)");
  sim->add_option("--complete", complete_path, "unmasked copy of the data");

  auto* mp = app.add_subcommand("mpcr", "multiscale PCR baseline");
  add_common(mp, common);
  mp->add_option("--model", model_path)->required();
  mp->add_option("--train", train_path, "the data the model was fitted on")->required();
  mp->add_option("--test", test_path, "test rows with the true response")->required();
  mp->add_option("--response", response, "response column (0-based)")->required();
  mp->add_option("--scale", scale, "single scale; all scales when omitted");

  auto* bench = app.add_subcommand("bench", "time both stages over a grid of D");
  add_common(bench, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) return cmd_fit(common, data_path, log_path);
    if (*score) return cmd_score(common, model_path, data_path);
    if (*imp) return cmd_impute(common, model_path, data_path);
    if (*cls) return cmd_classify(common, model_paths, data_path);
    if (*sim) return cmd_simulate(common, spec, truth_path, complete_path);
    if (*mp) return cmd_mpcr(common, model_path, train_path, test_path, response, scale);
    if (*bench) return cmd_bench(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
