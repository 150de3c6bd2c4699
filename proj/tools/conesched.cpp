// conesched: command-line front end.
//
//   conesched validate <config>
//   conesched region   <config> [--member RHO] [--direction D] [--deficit RHO] [--polygon N]
//   conesched select   <config> --env E --workload X
//   conesched simulate <config> [--csv PATH] [--summary PATH] [--fixed-step DT]
//   conesched sweep    <config> --direction D --thetas T1,T2,...
//   conesched repro    [--only N]
//
// Exit codes: 0 success, 2 invalid input, 3 acceptance failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "conesched/conesched.hpp"
#include "conesched/repro.hpp"

namespace {

using namespace conesched;
using nlohmann::json;

constexpr int kExitInvalid = 2;
constexpr int kExitAcceptance = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Vector parse_vector(const std::string& text, std::size_t expected, const std::string& what) {
  Vector out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(what + ": cannot parse '" + item + "'");
    }
  }
  if (expected && out.size() != expected) {
    throw UsageError(what + ": expected " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

json to_json(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

json validity_json(const MatrixValidity& m) {
  return {{"symmetric", m.symmetric},
          {"positive_definite", m.positive_definite},
          {"offdiag_nonpositive", m.offdiag_nonpositive},
          {"valid", m.valid()}};
}

int cmd_validate(const RunConfig& cfg) {
  auto report = validate_system(cfg.spec);
  // Closure warnings only matter for the sets the schedule actually runs on.
  if (report.ok()) report.warnings = validate_system(effective_system(cfg)).warnings;
  const auto m = validate_matrix(cfg.matrix);
  json out = {{"violations", report.violations}, {"warnings", report.warnings}, {"matrix", validity_json(m)}};
  std::cout << out.dump(2) << "\n";
  return report.ok() && m.valid() ? 0 : kExitInvalid;
}

void require_valid_system(const RunConfig& cfg) {
  const auto report = validate_system(cfg.spec);
  if (!report.ok()) throw ConfigError("invalid system: " + report.violations.front());
}

void warn_if_invalid_matrix(const RunConfig& cfg) {
  const auto m = validate_matrix(cfg.matrix);
  if (m.valid()) return;
  std::vector<std::string> failed;
  if (!m.symmetric) failed.push_back("not symmetric");
  if (!m.positive_definite) failed.push_back("not positive definite");
  if (!m.offdiag_nonpositive) failed.push_back("positive off-diagonal entries");
  std::string reasons;
  for (const auto& f : failed) reasons += (reasons.empty() ? "" : ", ") + f;
  std::cerr << "WARNING: schedule matrix is invalid (" << reasons << "); stability is not guaranteed\n";
}

int cmd_region(const RunConfig& cfg, const std::string& member, const std::string& direction,
               const std::string& deficit, const std::string& norm, int polygon) {
  require_valid_system(cfg);
  const auto sys = effective_system(cfg);
  const std::size_t Q = sys.queues;
  bool any = false;
  if (!member.empty()) {
    const Vector rho = parse_vector(member, Q, "--member");
    const auto cert = membership(rho, sys);
    json out = {{"load", to_json(rho)}, {"member", cert.member}, {"margin", membership_margin(rho, sys)}};
    if (cert.member) {
      json phi = json::array();
      for (const auto& p : cert.phi) phi.push_back(to_json(p));
      out["phi"] = phi;
      out["slack"] = to_json(cert.slack);
    }
    std::cout << out.dump(2) << "\n";
    any = true;
  }
  if (!direction.empty()) {
    const Vector d = parse_vector(direction, Q, "--direction");
    const double theta = boundary_scale(d, sys);
    std::cout << json{{"direction", to_json(d)}, {"theta", theta}}.dump(2) << "\n";
    any = true;
  }
  if (!deficit.empty()) {
    const Vector rho = parse_vector(deficit, Q, "--deficit");
    if (norm != "max" && norm != "sum") throw UsageError("--norm: expected max or sum");
    const double d = min_drain_deficit(rho, sys, norm == "max" ? DeficitNorm::kMax : DeficitNorm::kSum);
    std::cout << json{{"load", to_json(rho)}, {"norm", norm}, {"deficit", d}}.dump(2) << "\n";
    any = true;
  }
  if (polygon > 0) {
    std::cout << "angle,rho_1,rho_2\n";
    for (const auto& p : region_polygon_2d(sys, static_cast<std::size_t>(polygon))) {
      std::cout << p.angle << "," << p.rho[0] << "," << p.rho[1] << "\n";
    }
    any = true;
  }
  if (!any) throw UsageError("region: give at least one of --member, --direction, --deficit, --polygon");
  return 0;
}

int cmd_select(const RunConfig& cfg, int env, const std::string& workload) {
  require_valid_system(cfg);
  warn_if_invalid_matrix(cfg);
  const auto sys = effective_system(cfg);
  if (env < 1 || static_cast<std::size_t>(env) > sys.environments.size()) throw UsageError("--env: out of range");
  const Vector x = parse_vector(workload, sys.queues, "--workload");
  SelectOptions opt;
  opt.implicit_closure = cfg.implicit_closure;
  const auto sel = select(static_cast<std::size_t>(env - 1), x, cfg.matrix, sys, opt);
  json maxi = json::array();
  for (const auto& s : sel.maximizers) maxi.push_back(to_json(s.rates));
  std::cout << json{{"chosen", to_json(sel.chosen.rates)}, {"value", sel.value}, {"zeroed", sel.zeroed},
                    {"maximizers", maxi}}
                   .dump(2)
            << "\n";
  return 0;
}

void write_csv(std::ostream& os, const Trajectory& traj) {
  os << "time";
  for (std::size_t q = 0; q < traj.queues; ++q) os << ",x_" << q + 1;
  os << ",env";
  for (std::size_t q = 0; q < traj.queues; ++q) os << ",s_" << q + 1;
  os << "\n";
  os.precision(12);
  for (const auto& s : traj.samples) {
    os << s.time;
    for (double v : s.workload) os << "," << v;
    os << "," << s.env + 1;
    for (double v : s.service) os << "," << v;
    os << "\n";
  }
}

json summary_json(const RunConfig& cfg, const SystemSpec& sys, const Trajectory& traj, const StabilityVerdict& v) {
  Vector slope(traj.final_workload);
  for (double& x : slope) x /= traj.horizon;
  Vector occupancy(traj.occupancy);
  for (double& x : occupancy) x /= traj.horizon;
  json usage = json::array();
  for (std::size_t e = 0; e < traj.usage.size(); ++e) {
    json env = json::array();
    for (const auto& u : traj.usage[e]) env.push_back({{"service", to_json(u.vector.rates)}, {"fraction", u.time / traj.horizon}});
    usage.push_back(env);
  }
  const auto& ev = traj.events;
  return {{"horizon", traj.horizon},
          {"seed", cfg.seed},
          {"integrator", traj.fixed_step ? "fixed-step" : "event-driven"},
          {"final_workload", to_json(traj.final_workload)},
          {"final_slope", slope},
          {"effective_service_rates", to_json(effective_service_rates(traj))},
          {"measured_load", to_json(v.measured_load)},
          {"tail_slope", to_json(v.tail_slope)},
          {"deficit_predicted", v.deficit_predicted},
          {"verdict", to_string(v.verdict)},
          {"flow_balance_residual", flow_balance_check(traj)},
          {"occupancy", to_json(occupancy)},
          {"usage", usage},
          {"events",
           {{"total", ev.total},
            {"env_switch", ev.env_switch},
            {"rate_change", ev.rate_change},
            {"job_jump", ev.job_jump},
            {"queue_empty", ev.queue_empty},
            {"cone_crossing", ev.cone_crossing},
            {"lag_update", ev.lag_update}}},
          {"sliding_time", traj.sliding_time},
          {"unresolved_regimes", traj.unresolved_regimes},
          {"chattering_guard_activations", traj.guard_activations},
          {"clamps", traj.clamp_count},
          {"matrix", validity_json(validate_matrix(cfg.matrix))},
          {"queues", sys.queues}};
}

struct Thresholds {
  double tail_fraction = 0.5;
  VerdictThresholds verdict;
};

Trajectory run_config(const RunConfig& cfg, const SystemSpec& sys, const TrafficTrace& traffic, double fixed_dt) {
  if (fixed_dt > 0.0) return simulate_fixed_step(sys, cfg.matrix, traffic, cfg.envtrace, cfg.horizon, fixed_dt, cfg.options);
  return simulate(sys, cfg.matrix, traffic, cfg.envtrace, cfg.horizon, cfg.options);
}

int cmd_simulate(const RunConfig& cfg, const std::string& csv, const std::string& summary, double fixed_dt,
                 const Thresholds& th) {
  require_valid_system(cfg);
  if (!cfg.traffic) throw ConfigError("simulate: config has no traffic section");
  warn_if_invalid_matrix(cfg);
  const auto sys = effective_system(cfg);
  const auto traj = run_config(cfg, sys, *cfg.traffic, fixed_dt);
  const double delta = min_drain_deficit(cfg.traffic->load, sys);
  const auto v = rate_stability_metric(traj, th.tail_fraction, delta, th.verdict);
  if (csv.empty() || csv == "-") {
    write_csv(std::cout, traj);
  } else {
    std::ofstream out(csv);
    if (!out) throw UsageError("cannot write '" + csv + "'");
    write_csv(out, traj);
  }
  const std::string text = summary_json(cfg, sys, traj, v).dump(2);
  if (!summary.empty()) {
    std::ofstream out(summary);
    if (!out) throw UsageError("cannot write '" + summary + "'");
    out << text << "\n";
  } else if (csv.empty() || csv == "-") {
    std::cerr << text << "\n";
  } else {
    std::cout << text << "\n";
  }
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& direction, const std::string& thetas, double fixed_dt,
              const Thresholds& th) {
  require_valid_system(cfg);
  if (!cfg.traffic) throw ConfigError("sweep: config has no traffic section");
  warn_if_invalid_matrix(cfg);
  const auto sys = effective_system(cfg);
  const Vector d = parse_vector(direction, sys.queues, "--direction");
  const Vector ts = parse_vector(thetas, 0, "--thetas");
  const double boundary = boundary_scale(d, sys);
  std::cout << "theta,boundary_fraction";
  for (std::size_t q = 0; q < sys.queues; ++q) std::cout << ",rho_" << q + 1;
  std::cout << ",deficit,verdict,max_slope,max_tail_slope,events,flow_balance\n";
  for (double t : ts) {
    TrafficTrace traffic = *cfg.traffic;
    traffic.load = d;
    for (double& v : traffic.load) v *= t;
    const auto traj = run_config(cfg, sys, traffic, fixed_dt);
    const double delta = min_drain_deficit(traffic.load, sys);
    const auto v = rate_stability_metric(traj, th.tail_fraction, delta, th.verdict);
    std::cout << t << "," << t / boundary;
    for (double r : traffic.load) std::cout << "," << r;
    std::cout << "," << delta << "," << to_string(v.verdict) << "," << v.max_slope() << "," << v.max_tail_slope() << ","
              << traj.events.total << "," << flow_balance_check(traj) << "\n";
  }
  return 0;
}

int cmd_repro(int only) {
  bool ok = true;
  if (only > 0) {
    const std::vector<repro::CriterionResult (*)()> fns = {repro::criterion_1, repro::criterion_2, repro::criterion_3,
                                                    repro::criterion_4, repro::criterion_5, repro::criterion_6,
                                                    [] { return repro::criterion_7(); },
                                                    [] { return repro::criterion_8(); },
                                                    repro::criterion_9, repro::criterion_10};
    if (only > static_cast<int>(fns.size())) throw UsageError("--only: criterion out of range");
    const auto r = repro::run_guarded(only, fns[static_cast<std::size_t>(only - 1)]);
    std::cout << repro::format_line(r) << std::endl;
    ok = r.pass;
  } else {
    for (const auto& r : repro::run_all()) {
      std::cout << repro::format_line(r) << std::endl;
      ok = ok && r.pass;
    }
  }
  return ok ? 0 : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cone schedules for queues in fluctuating environments"};
  app.require_subcommand(1);

  std::string config;
  Thresholds th;
  auto add_thresholds = [&](CLI::App* sub) {
    sub->add_option("--tail-fraction", th.tail_fraction, "fraction of the horizon used for the tail slope");
    sub->add_option("--stable-threshold", th.verdict.stable_relative, "relative slope bound for a stable verdict");
    sub->add_option("--unstable-fraction", th.verdict.unstable_fraction, "fraction of the deficit for an unstable verdict");
  };

  auto* validate = app.add_subcommand("validate", "check system and matrix hypotheses");
  validate->add_option("config", config, "JSON config")->required();

  std::string member, direction, deficit, norm = "max";
  int polygon = 0;
  auto* region = app.add_subcommand("region", "stability region queries");
  region->add_option("config", config, "JSON config")->required();
  region->add_option("--member", member, "load vector, comma separated");
  region->add_option("--direction", direction, "direction for the boundary scale");
  region->add_option("--deficit", deficit, "load vector for the minimal drain deficit");
  region->add_option("--norm", norm, "deficit norm: max or sum");
  region->add_option("--polygon", polygon, "boundary points for two queues");

  int env = 1;
  std::string workload;
  auto* sel = app.add_subcommand("select", "one-shot cone selection");
  sel->add_option("config", config, "JSON config")->required();
  sel->add_option("--env", env, "environment (1-based)");
  sel->add_option("--workload", workload, "workload vector")->required();

  std::string csv, summary;
  double fixed_dt = 0.0;
  auto* sim = app.add_subcommand("simulate", "simulate and write the trajectory CSV and a JSON summary");
  sim->add_option("config", config, "JSON config")->required();
  sim->add_option("--csv", csv, "trajectory CSV path (default stdout)");
  sim->add_option("--summary", summary, "summary JSON path");
  sim->add_option("--fixed-step", fixed_dt, "use the fixed-step integrator with this dt");
  add_thresholds(sim);

  std::string thetas;
  auto* sweep = app.add_subcommand("sweep", "verdicts over a grid of load scalings");
  sweep->add_option("config", config, "JSON config")->required();
  sweep->add_option("--direction", direction, "load direction")->required();
  sweep->add_option("--thetas", thetas, "comma-separated scalings")->required();
  sweep->add_option("--fixed-step", fixed_dt, "use the fixed-step integrator with this dt");
  add_thresholds(sweep);

  int only = 0;
  auto* rep = app.add_subcommand("repro", "run the acceptance suite");
  rep->add_option("--only", only, "run a single criterion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (rep->parsed()) return cmd_repro(only);
    const RunConfig cfg = load_config(config);
    if (validate->parsed()) return cmd_validate(cfg);
    if (region->parsed()) return cmd_region(cfg, member, direction, deficit, norm, polygon);
    if (sel->parsed()) return cmd_select(cfg, env, workload);
    if (sim->parsed()) return cmd_simulate(cfg, csv, summary, fixed_dt, th);
    if (sweep->parsed()) return cmd_sweep(cfg, direction, thetas, fixed_dt, th);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
