#include "geode/harness/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace geode {

namespace {

using Setter = std::function<void(RunConfig&, const nlohmann::json&)>;

void need_number(const std::string& key, const nlohmann::json& v) {
  if (!v.is_number()) throw Error(ErrorKind::ConfigError, "config key '" + key + "': expected a number");
}

void need_integer(const std::string& key, const nlohmann::json& v) {
  if (!v.is_number_integer()) throw Error(ErrorKind::ConfigError, "config key '" + key + "': expected an integer");
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto real = [&t](const std::string& key, double Hyperparams::*field) {
      t[key] = [key, field](RunConfig& c, const nlohmann::json& v) {
        need_number(key, v);
        c.hyper.*field = v.get<double>();
      };
    };
    auto hint = [&t](const std::string& key, int Hyperparams::*field) {
      t[key] = [key, field](RunConfig& c, const nlohmann::json& v) {
        need_integer(key, v);
        c.hyper.*field = v.get<int>();
      };
    };
    auto cint = [&t](const std::string& key, int RunConfig::*field) {
      t[key] = [key, field](RunConfig& c, const nlohmann::json& v) {
        need_integer(key, v);
        c.*field = v.get<int>();
      };
    };
    real("a_sigma", &Hyperparams::a_sigma);
    real("b_sigma", &Hyperparams::b_sigma);
    real("a_tau", &Hyperparams::a_tau);
    real("a_S", &Hyperparams::a_S);
    real("b_R", &Hyperparams::b_R);
    real("c0", &Hyperparams::c0);
    real("c1", &Hyperparams::c1);
    real("tol", &Hyperparams::tol);
    hint("d_upper", &Hyperparams::d_upper);
    hint("L", &Hyperparams::L);
    hint("iters", &Hyperparams::iters);
    hint("burn_in", &Hyperparams::burn_in);
    hint("thin", &Hyperparams::thin);
    t["seed"] = [](RunConfig& c, const nlohmann::json& v) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw Error(ErrorKind::ConfigError, "config key 'seed': expected a non-negative integer");
      }
      c.hyper.seed = v.get<std::uint64_t>();
    };
    cint("min_cell_size", &RunConfig::min_cell_size);
    cint("max_lloyd_iters", &RunConfig::max_lloyd_iters);
    cint("oversample", &RunConfig::oversample);
    cint("power_iters", &RunConfig::power_iters);
    cint("impute_sweeps", &RunConfig::impute_sweeps);
    cint("threads", &RunConfig::threads);
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  hyper.validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::ConfigError, what);
  };
  require(min_cell_size == 0 || min_cell_size >= 2, "min_cell_size must be 0 (automatic) or ≥ 2");
  require(max_lloyd_iters >= 1, "max_lloyd_iters must be ≥ 1");
  require(oversample >= 0, "oversample must be ≥ 0");
  require(power_iters >= 0, "power_iters must be ≥ 0");
  require(impute_sweeps >= 0, "impute_sweeps must be ≥ 0");
  require(threads >= 1, "threads must be ≥ 1");
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
    it->second(c, value);
  }
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  const Hyperparams& h = c.hyper;
  return nlohmann::json{{"a_sigma", h.a_sigma},
                        {"b_sigma", h.b_sigma},
                        {"a_tau", h.a_tau},
                        {"a_S", h.a_S},
                        {"b_R", h.b_R},
                        {"c0", h.c0},
                        {"c1", h.c1},
                        {"tol", h.tol},
                        {"d_upper", h.d_upper},
                        {"L", h.L},
                        {"iters", h.iters},
                        {"burn_in", h.burn_in},
                        {"thin", h.thin},
                        {"seed", h.seed},
                        {"min_cell_size", c.min_cell_size},
                        {"max_lloyd_iters", c.max_lloyd_iters},
                        {"oversample", c.oversample},
                        {"power_iters", c.power_iters},
                        {"impute_sweeps", c.impute_sweeps},
                        {"threads", c.threads}};
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace geode
