#pragma once

// JSON run configuration: system, matrix, traces, horizon and simulator options.
//
//   {"queues": 2,
//    "environments": [{"pi": 0.5, "services": [[1,0],[0,1]]}, ...],
//    "matrix": [[1,0],[0,1]],
//    "traffic": {"kind": "fluid", "load": [0.6,0.6], "job_size": 1, "window": 10,
//                "burst": 5, "designated_env": [1,2]},
//    "envtrace": {"kind": "periodic", "cycle": 10},
//    "horizon": 10000, "seed": 1,
//    "options": {"initial_workload": [0,0], "info_lag": 0, "noise": 0, "sample_stride": 0,
//                "event_cap": 100000000, "closure": "eager", "record_switches": true}}
//
// Environment indices in designated_env are 1-based. CONESCHED_SEED overrides "seed".

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "conesched/model.hpp"
#include "conesched/sim.hpp"
#include "conesched/traces.hpp"

namespace conesched {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  /// Service sets as written (not completed).
  SystemSpec spec;
  ScheduleMatrix matrix = ScheduleMatrix::identity(1);
  std::optional<TrafficTrace> traffic;
  EnvironmentTrace envtrace;
  double horizon = 1e4;
  std::uint64_t seed = 1;
  SimOptions options;
  bool implicit_closure = false;
};

namespace detail {

using nlohmann::json;

inline double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(what + ": non-finite value");
  return v;
}

inline Vector numbers(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array of numbers");
  Vector out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

inline TrafficKind traffic_kind(const std::string& s) {
  if (s == "fluid") return TrafficKind::kFluid;
  if (s == "jobs") return TrafficKind::kJobs;
  if (s == "stochastic") return TrafficKind::kStochastic;
  if (s == "adversarial-env") return TrafficKind::kAdversarialEnv;
  if (s == "adversarial-schedule") return TrafficKind::kAdversarialSchedule;
  throw ConfigError("traffic.kind: unknown kind '" + s + "'");
}

inline EnvTraceKind env_kind(const std::string& s) {
  if (s == "periodic") return EnvTraceKind::kPeriodic;
  if (s == "random-holding") return EnvTraceKind::kRandomHolding;
  throw ConfigError("envtrace.kind: unknown kind '" + s + "'");
}

inline std::uint64_t seed_override(std::uint64_t fallback) {
  const char* env = std::getenv("CONESCHED_SEED");
  if (!env || !*env) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("CONESCHED_SEED: not an unsigned integer");
  }
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::number;
  using detail::numbers;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig cfg;
  if (!j.contains("queues") || !j["queues"].is_number_integer() || j["queues"].get<long long>() <= 0) {
    throw ConfigError("queues: expected a positive integer");
  }
  cfg.spec.queues = j["queues"].get<std::size_t>();
  const std::size_t Q = cfg.spec.queues;

  const auto& opts = j.contains("options") ? j["options"] : nlohmann::json::object();
  if (!opts.is_object()) throw ConfigError("options: expected an object");
  const std::string closure = opts.value("closure", std::string("eager"));
  if (closure != "eager" && closure != "implicit") throw ConfigError("options.closure: expected eager or implicit");
  cfg.implicit_closure = closure == "implicit";

  if (!j.contains("environments") || !j["environments"].is_array()) {
    throw ConfigError("environments: expected an array");
  }
  for (std::size_t e = 0; e < j["environments"].size(); ++e) {
    const auto& je = j["environments"][e];
    const std::string at = "environments[" + std::to_string(e) + "]";
    if (!je.is_object() || !je.contains("pi") || !je.contains("services")) {
      throw ConfigError(at + ": expected {pi, services}");
    }
    cfg.spec.pi.push_back(number(je["pi"], at + ".pi"));
    if (!je["services"].is_array()) throw ConfigError(at + ".services: expected an array");
    std::vector<ServiceVector> services;
    for (std::size_t i = 0; i < je["services"].size(); ++i) {
      Vector r = numbers(je["services"][i], at + ".services[" + std::to_string(i) + "]");
      if (r.size() != Q) throw ConfigError(at + ".services[" + std::to_string(i) + "]: expected " + std::to_string(Q) + " rates");
      services.emplace_back(std::move(r));
    }
    EnvironmentSpec env;
    env.services = services.empty() ? services : make_environment(services, false).services;
    env.completed = false;
    cfg.spec.environments.push_back(std::move(env));
  }

  if (j.contains("matrix")) {
    if (!j["matrix"].is_array()) throw ConfigError("matrix: expected an array of rows");
    std::vector<Vector> rows;
    for (std::size_t r = 0; r < j["matrix"].size(); ++r) rows.push_back(numbers(j["matrix"][r], "matrix[" + std::to_string(r) + "]"));
    if (rows.size() != Q) throw ConfigError("matrix: expected " + std::to_string(Q) + " rows");
    try {
      cfg.matrix = ScheduleMatrix(rows);
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("matrix: ") + ex.what());
    }
  } else {
    cfg.matrix = ScheduleMatrix::identity(Q);
  }

  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0) throw ConfigError("seed: expected a nonnegative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  cfg.seed = detail::seed_override(cfg.seed);

  if (j.contains("horizon")) cfg.horizon = number(j["horizon"], "horizon");
  if (!(cfg.horizon > 0.0)) throw ConfigError("horizon: must be positive");

  cfg.envtrace.pi = cfg.spec.pi;
  cfg.envtrace.seed = detail::mix_seed(cfg.seed, 1);
  if (j.contains("envtrace")) {
    const auto& jt = j["envtrace"];
    if (!jt.is_object()) throw ConfigError("envtrace: expected an object");
    cfg.envtrace.kind = detail::env_kind(jt.value("kind", std::string("periodic")));
    if (jt.contains("cycle")) cfg.envtrace.cycle = number(jt["cycle"], "envtrace.cycle");
    if (!(cfg.envtrace.cycle > 0.0)) throw ConfigError("envtrace.cycle: must be positive");
  }

  if (j.contains("traffic")) {
    const auto& jt = j["traffic"];
    if (!jt.is_object()) throw ConfigError("traffic: expected an object");
    const TrafficKind kind = detail::traffic_kind(jt.value("kind", std::string("fluid")));
    if (!jt.contains("load")) throw ConfigError("traffic.load: missing");
    Vector load = numbers(jt["load"], "traffic.load");
    if (load.size() != Q) throw ConfigError("traffic.load: expected " + std::to_string(Q) + " entries");
    TrafficParams p;
    if (jt.contains("job_size")) {
      p.job_size = jt["job_size"].is_array() ? numbers(jt["job_size"], "traffic.job_size")
                                             : Vector{number(jt["job_size"], "traffic.job_size")};
    }
    if (jt.contains("window")) p.window = number(jt["window"], "traffic.window");
    if (jt.contains("burst")) p.burst = number(jt["burst"], "traffic.burst");
    if (jt.contains("designated_env")) {
      const auto& jd = jt["designated_env"];
      if (!jd.is_array()) throw ConfigError("traffic.designated_env: expected an array");
      for (const auto& v : jd) {
        if (!v.is_number_integer() || v.get<long long>() < 1) {
          throw ConfigError("traffic.designated_env: expected 1-based environment indices");
        }
        p.designated_env.push_back(v.get<std::size_t>() - 1);
      }
    }
    p.seed = detail::mix_seed(cfg.seed, 2);
    try {
      cfg.traffic = make_traffic(kind, std::move(load), std::move(p));
    } catch (const TraceError& ex) {
      throw ConfigError(std::string("traffic: ") + ex.what());
    }
  }

  auto& o = cfg.options;
  o.implicit_closure = cfg.implicit_closure;
  o.noise_seed = detail::mix_seed(cfg.seed, 3);
  if (opts.contains("initial_workload")) {
    o.initial_workload = numbers(opts["initial_workload"], "options.initial_workload");
    if (o.initial_workload.size() != Q) throw ConfigError("options.initial_workload: dimension mismatch");
  }
  if (opts.contains("info_lag")) o.info_lag = number(opts["info_lag"], "options.info_lag");
  if (opts.contains("noise")) o.selection_noise = number(opts["noise"], "options.noise");
  if (opts.contains("sample_stride")) o.sample_stride = number(opts["sample_stride"], "options.sample_stride");
  if (opts.contains("event_cap")) {
    if (!opts["event_cap"].is_number_integer() || opts["event_cap"].get<long long>() <= 0) {
      throw ConfigError("options.event_cap: expected a positive integer");
    }
    o.event_cap = opts["event_cap"].get<std::uint64_t>();
  }
  if (opts.contains("record_switches")) {
    if (!opts["record_switches"].is_boolean()) throw ConfigError("options.record_switches: expected a boolean");
    o.record_switches = opts["record_switches"].get<bool>();
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("invalid JSON: ") + ex.what());
  }
  return parse_config(j);
}

/// The system the schedule runs on: closure applied unless implicit closure
/// was requested.
inline SystemSpec effective_system(const RunConfig& cfg) {
  return cfg.implicit_closure ? cfg.spec : completed(cfg.spec);
}

}  // namespace conesched
