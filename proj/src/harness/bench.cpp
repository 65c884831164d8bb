#include "geode/harness/bench.hpp"

#include "geode/harness/pipeline.hpp"
#include "geode/harness/scenarios.hpp"

#include <algorithm>
#include <chrono>

namespace geode {

namespace {

// Best of the repeats: scheduler noise only ever adds time.
double best(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2 || x.size() != y.size()) throw Error(ErrorKind::InvalidArgument, "need two or more paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorKind::InvalidArgument, "x values are all equal");
  if (syy == 0.0) return 1.0;
  return sxy * sxy / (sxx * syy);
}

BenchReport run_bench(const BenchOptions& options) {
  if (options.dims.size() < 2) throw Error(ErrorKind::ConfigError, "bench needs at least two dimensions");
  if (options.iters < 1 || options.repeats < 1) throw Error(ErrorKind::ConfigError, "iters and repeats must be ≥ 1");
  BenchReport report;
  report.options = options;
  for (Index D : options.dims) {
    ScenarioSpec spec;
    spec.id = "7";
    spec.n = options.n;
    spec.D = D;
    spec.seed = options.seed;
    const DataSet data(simulate_scenario(spec).complete);

    RunConfig config;
    config.hyper.d_upper = options.d_upper;
    config.hyper.L = options.L;
    config.hyper.iters = options.iters;
    config.hyper.burn_in = options.iters;
    config.hyper.seed = options.seed;
    config.threads = options.threads;

    std::vector<double> s1, s2;
    for (int r = 0; r < options.repeats; ++r) {
      auto start = std::chrono::steady_clock::now();
      StageOneResult stage = run_stage_one(data, config);
      s1.push_back(seconds_since(start));

      const SamplerContext ctx{stage.tree, stage.dict, stage.stats, data, config.hyper};
      start = std::chrono::steady_clock::now();
      run_gibbs(ctx);
      s2.push_back(seconds_since(start) / options.iters);
    }
    report.points.push_back({D, best(s1), best(s2)});
  }
  std::vector<double> x, y1;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const BenchPoint& p : report.points) {
    x.push_back(static_cast<double>(p.D));
    y1.push_back(p.stage1_seconds);
    lo = std::min(lo, p.stage2_seconds_per_iter);
    hi = std::max(hi, p.stage2_seconds_per_iter);
  }
  report.stage1_r2 = linear_fit_r2(x, y1);
  report.stage2_spread = lo > 0.0 ? (hi - lo) / lo : 0.0;
  return report;
}

nlohmann::json bench_to_json(const BenchReport& report) {
  const BenchOptions& o = report.options;
  nlohmann::json points = nlohmann::json::array();
  for (const BenchPoint& p : report.points) {
    points.push_back({{"D", p.D}, {"stage1_seconds", p.stage1_seconds}, {"stage2_seconds_per_iter", p.stage2_seconds_per_iter}});
  }
  return {{"options",
           {{"dims", o.dims},
            {"n", o.n},
            {"d_upper", o.d_upper},
            {"L", o.L},
            {"iters", o.iters},
            {"repeats", o.repeats},
            {"threads", o.threads},
            {"seed", o.seed}}},
          {"points", points},
          {"stage1_r2", report.stage1_r2},
          {"stage2_spread", report.stage2_spread}};
}

BenchReport bench_from_json(const nlohmann::json& j) {
  BenchReport r;
  try {
    const nlohmann::json& o = j.at("options");
    r.options.dims = o.at("dims").get<std::vector<Index>>();
    r.options.n = o.at("n").get<Index>();
    r.options.d_upper = o.at("d_upper").get<int>();
    r.options.L = o.at("L").get<int>();
    r.options.iters = o.at("iters").get<int>();
    r.options.repeats = o.at("repeats").get<int>();
    r.options.threads = o.at("threads").get<int>();
    r.options.seed = o.at("seed").get<std::uint64_t>();
    for (const nlohmann::json& p : j.at("points")) {
      r.points.push_back({p.at("D").get<Index>(), p.at("stage1_seconds").get<double>(),
                          p.at("stage2_seconds_per_iter").get<double>()});
    }
    r.stage1_r2 = j.at("stage1_r2").get<double>();
    r.stage2_spread = j.at("stage2_spread").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad bench report: ") + e.what());
  }
  return r;
}

}  // namespace geode
