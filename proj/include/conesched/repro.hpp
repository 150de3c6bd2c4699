#pragma once

// Reference configurations and the acceptance suite (criteria 1-10). Shared
// by `conesched repro` and the acceptance test binary.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "conesched/analysis.hpp"
#include "conesched/region.hpp"
#include "conesched/scheduler.hpp"
#include "conesched/sim.hpp"
#include "conesched/testing/grid_oracle.hpp"
#include "conesched/traces.hpp"

namespace conesched::repro {

// Pinned tolerances.
inline constexpr double kRegionTol = 1e-9;
inline constexpr double kRegionSeconds = 1.0;
inline constexpr double kCe1RelTol = 0.10;
inline constexpr double kCe1ServiceTol = 1e-6;
inline constexpr double kCe1Seconds = 5.0;
inline constexpr double kCe2MinGrowth = 0.3;
inline constexpr double kStableSlope = 0.01;
inline constexpr double kSuiteSeconds = 60.0;
inline constexpr double kOracleBand = 0.03;
inline constexpr int kOracleSteps = 50;
inline constexpr double kFlowBalanceTol = 1e-8;
inline constexpr double kGapConstant = 5.0;
inline constexpr double kOrderLow = 0.7;
inline constexpr double kOrderHigh = 1.3;

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

inline SystemSpec two_env(std::vector<ServiceVector> e1, std::vector<ServiceVector> e2, double pi1 = 0.5) {
  SystemSpec s;
  s.queues = e1.front().size();
  s.environments = {make_environment(std::move(e1)), make_environment(std::move(e2))};
  s.pi = {pi1, 1.0 - pi1};
  return s;
}

inline SystemSpec single_env(std::vector<ServiceVector> services, bool complete = true) {
  SystemSpec s;
  s.queues = services.front().size();
  s.environments = {make_environment(std::move(services), complete)};
  s.pi = {1.0};
  return s;
}

/// e1 offers (1,0) or (0,1), e2 offers (1,1); equal proportions.
inline SystemSpec config_a() { return two_env({{1, 0}, {0, 1}}, {{1, 1}}); }
/// e1 offers (1,0), e2 offers (0,1) or (1,1); equal proportions.
inline SystemSpec config_b() { return two_env({{1, 0}}, {{0, 1}, {1, 1}}); }
inline SystemSpec ce1_system() { return single_env({{1, 0}, {0, 3}}); }
inline ScheduleMatrix ce1_matrix() { return ScheduleMatrix({{2, 1}, {1, 2}}); }
inline SystemSpec ce2_system() { return single_env({{1, 1}, {1, 0}, {0, 1}, {0, 0}}); }
inline ScheduleMatrix ce2_matrix() { return ScheduleMatrix({{1, -2}, {-2, 1}}); }
inline ScheduleMatrix coupled_matrix() { return ScheduleMatrix({{2, -1}, {-1, 2}}); }

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline Vector scaled(const Vector& dir, double theta) {
  Vector out(dir);
  for (double& v : out) v *= theta;
  return out;
}

inline EnvironmentTrace one_env_trace() { return make_env_trace(EnvTraceKind::kPeriodic, {1.0}, 10.0); }

}  // namespace detail

inline CriterionResult criterion_1() {
  detail::Stopwatch sw;
  const auto a = config_a();
  const double t10 = boundary_scale(Vector{1, 0}, a);
  const double t01 = boundary_scale(Vector{0, 1}, a);
  const double t11 = boundary_scale(Vector{1, 1}, a);
  const bool in = membership(Vector{1, 0.5}, a).member;
  const bool out = membership(Vector{1, 0.6}, a).member;
  CriterionResult r{1, "region of configuration A", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = std::abs(t10 - 1) <= kRegionTol && std::abs(t01 - 1) <= kRegionTol && std::abs(t11 - 0.75) <= kRegionTol &&
           in && !out && r.seconds < kRegionSeconds;
  r.detail = "theta(1,0)=" + detail::fmt(t10) + " theta(0,1)=" + detail::fmt(t01) + " theta(1,1)=" +
             detail::fmt(t11) + " member(1,.5)=" + (in ? "true" : "false") + " member(1,.6)=" + (out ? "true" : "false");
  return r;
}

inline CriterionResult criterion_2() {
  detail::Stopwatch sw;
  const auto b = config_b();
  const double t01 = boundary_scale(Vector{0, 1}, b);
  const bool in = membership(Vector{1, 0.5}, b).member;
  const bool out = membership(Vector{0.9, 0.6}, b).member;
  CriterionResult r{2, "region of configuration B", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = std::abs(t01 - 0.5) <= kRegionTol && in && !out;
  r.detail = "theta(0,1)=" + detail::fmt(t01) + " member(1,.5)=" + (in ? "true" : "false") +
             " member(.9,.6)=" + (out ? "true" : "false");
  return r;
}

inline CriterionResult criterion_3() {
  detail::Stopwatch sw;
  const double T = 1e4;
  const auto sys = ce1_system();
  const auto traj = simulate(sys, ce1_matrix(), make_traffic(TrafficKind::kFluid, {0.2, 0.2}), detail::one_env_trace(), T);
  const double growth = traj.final_workload[0] / T;
  const double served1 = effective_service_rates(traj)[0];
  const bool in_region = membership(Vector{0.2, 0.2}, sys).member;
  CriterionResult r{3, "positive off-diagonal matrix starves queue 1", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = in_region && std::abs(growth - 0.2) <= kCe1RelTol * 0.2 && served1 <= kCe1ServiceTol && r.seconds < kCe1Seconds;
  r.detail = "X1/T=" + detail::fmt(growth) + " queue-1 service rate=" + detail::fmt(served1) +
             " load in region=" + (in_region ? "true" : "false");
  return r;
}

inline CriterionResult criterion_4() {
  detail::Stopwatch sw;
  const double T = 1e4;
  const auto sys = ce2_system();
  const auto traj = simulate(sys, ce2_matrix(), make_traffic(TrafficKind::kFluid, {0.7, 0.7}), detail::one_env_trace(), T);
  const double growth = (traj.final_workload[0] + traj.final_workload[1]) / T;
  const ServiceVector both{1, 1};
  bool used = usage_time(traj, 0, both) > 0.0;
  for (const auto& s : traj.samples) used = used || s.service == both.rates;
  const auto reduced = single_env({{1, 0}, {0, 1}, {0, 0}});
  const double d_sum = min_drain_deficit(Vector{0.7, 0.7}, reduced, DeficitNorm::kSum);
  const double d_max = min_drain_deficit(Vector{0.7, 0.7}, reduced, DeficitNorm::kMax);
  CriterionResult r{4, "indefinite matrix never uses (1,1)", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = growth >= kCe2MinGrowth && !used;
  r.detail = "(X1+X2)/T=" + detail::fmt(growth) + " (1,1) used=" + (used ? "true" : "false") +
             " deficit without (1,1): sum=" + detail::fmt(d_sum) + " max=" + detail::fmt(d_max);
  return r;
}

struct SuiteReport {
  int runs = 0;
  int stable = 0;
  double worst_slope = 0.0;
  double worst_flow_balance = 0.0;
  std::string first_failure;
};

/// Stability sweep: both valid matrices, configurations A and B at
/// 0.9 of the boundary along (1,1) and (2,1), all traffic kinds, periodic and
/// random-holding environments, horizon 1e5.
inline SuiteReport stability_suite(const SimOptions& base, double horizon = 1e5) {
  SuiteReport rep;
  const std::vector<std::pair<std::string, ScheduleMatrix>> matrices = {{"I", ScheduleMatrix::identity(2)},
                                                                        {"[[2,-1],[-1,2]]", coupled_matrix()}};
  const std::vector<std::pair<std::string, SystemSpec>> systems = {{"A", config_a()}, {"B", config_b()}};
  const std::vector<Vector> directions = {{1, 1}, {2, 1}};
  const TrafficKind kinds[] = {TrafficKind::kFluid, TrafficKind::kJobs, TrafficKind::kStochastic,
                               TrafficKind::kAdversarialEnv, TrafficKind::kAdversarialSchedule};
  const EnvTraceKind env_kinds[] = {EnvTraceKind::kPeriodic, EnvTraceKind::kRandomHolding};
  std::uint64_t seed = 100;
  for (const auto& [bname, b] : matrices)
    for (const auto& [sname, sys] : systems)
      for (const auto& dir : directions)
        for (TrafficKind kind : kinds)
          for (EnvTraceKind ek : env_kinds) {
            ++seed;
            const Vector rho = detail::scaled(dir, 0.9 * boundary_scale(dir, sys));
            TrafficParams p;
            p.window = 10.0;
            p.burst = 5.0;
            p.seed = seed;
            SimOptions opts = base;
            opts.noise_seed = seed;
            const auto traj = simulate(sys, b, make_traffic(kind, rho, p),
                                       make_env_trace(ek, sys.pi, 10.0, seed), horizon, opts);
            const auto v = rate_stability_metric(traj);
            ++rep.runs;
            const double slope = v.max_slope();
            rep.worst_slope = std::max(rep.worst_slope, slope);
            rep.worst_flow_balance = std::max(rep.worst_flow_balance, flow_balance_check(traj));
            if (v.verdict == Verdict::kStable && slope <= kStableSlope) {
              ++rep.stable;
            } else if (rep.first_failure.empty()) {
              rep.first_failure = "B=" + bname + " config " + sname + " dir=(" + detail::fmt(dir[0]) + "," +
                                  detail::fmt(dir[1]) + ") " + to_string(kind) + "/" + to_string(ek) + " verdict " +
                                  to_string(v.verdict) + " slope " + detail::fmt(slope);
            }
          }
  return rep;
}

inline std::string describe(const SuiteReport& rep) {
  std::string s = std::to_string(rep.stable) + "/" + std::to_string(rep.runs) + " stable, max X/T=" +
                  detail::fmt(rep.worst_slope) + ", worst flow balance=" + detail::fmt(rep.worst_flow_balance);
  if (!rep.first_failure.empty()) s += ", first failure: " + rep.first_failure;
  return s;
}

inline CriterionResult criterion_5() {
  detail::Stopwatch sw;
  const auto rep = stability_suite({});
  CriterionResult r{5, "stability suite at 0.9 of the boundary", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = rep.runs > 0 && rep.stable == rep.runs && r.seconds < kSuiteSeconds;
  r.detail = describe(rep);
  return r;
}

inline CriterionResult criterion_6() {
  detail::Stopwatch sw;
  const auto a = config_a();
  const Vector dir{1, 1};
  const Vector rho = detail::scaled(dir, 1.1 * boundary_scale(dir, a));
  const double delta = min_drain_deficit(rho, a);
  CriterionResult r{6, "instability at 1.1 of the boundary", false, {}, 0.0};
  r.pass = delta > 0.0;
  std::string detail = "deficit=" + detail::fmt(delta);
  const std::pair<const char*, ScheduleMatrix> matrices[] = {{"I", ScheduleMatrix::identity(2)},
                                                             {"coupled", coupled_matrix()}};
  for (const auto& [name, b] : matrices) {
    const auto traj = simulate(a, b, make_traffic(TrafficKind::kFluid, rho),
                               make_env_trace(EnvTraceKind::kPeriodic, a.pi, 10.0), 1e5);
    const auto v = rate_stability_metric(traj, 0.5, delta);
    r.pass = r.pass && v.max_tail_slope() >= 0.5 * delta && v.verdict == Verdict::kUnstable;
    detail += std::string(" tail slope (B=") + name + ")=" + detail::fmt(v.max_tail_slope());
  }
  r.seconds = sw.seconds();
  r.detail = detail;
  return r;
}

/// Random system with Q <= 3 queues, E <= 2 environments, at most four
/// service vectors per environment, integer rates in [-1, 2]; no closure.
inline SystemSpec random_small_system(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> qd(1, 3), ed(1, 2), sd(1, 4), vd(-1, 2);
  std::uniform_real_distribution<double> pd(0.2, 0.8);
  SystemSpec s;
  s.queues = static_cast<std::size_t>(qd(rng));
  const int E = ed(rng);
  for (int e = 0; e < E; ++e) {
    std::vector<ServiceVector> services;
    const int k = sd(rng);
    for (int i = 0; i < k; ++i) {
      Vector v(s.queues);
      for (double& x : v) x = vd(rng);
      services.emplace_back(std::move(v));
    }
    s.environments.push_back(make_environment(std::move(services), false));
  }
  if (E == 1) {
    s.pi = {1.0};
  } else {
    const double p = pd(rng);
    s.pi = {p, 1.0 - p};
  }
  return s;
}

/// Load near the region: either a point of the region (random weights)
/// scaled by a factor in [0.5, 1.3], or a uniform point in [0, 1.5]^Q.
inline Vector random_load(const SystemSpec& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector rho(s.queues);
  if (u(rng) < 0.5) {
    std::vector<Vector> phi;
    for (const auto& env : s.environments) {
      Vector w(env.services.size());
      double total = 0.0;
      for (double& x : w) total += (x = -std::log(1.0 - u(rng)));
      for (double& x : w) x /= total;
      phi.push_back(std::move(w));
    }
    const Vector served = served_rates(s, phi);
    const double f = 0.5 + 0.8 * u(rng);
    for (std::size_t q = 0; q < s.queues; ++q) rho[q] = std::max(0.0, f * served[q]);
  } else {
    for (double& x : rho) x = 1.5 * u(rng);
  }
  return rho;
}

inline CriterionResult criterion_7(int instances = 200, std::uint64_t seed = 7) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  int compared = 0, banded = 0, disagreements = 0, members = 0;
  std::string first;
  for (int i = 0; i < instances; ++i) {
    const auto sys = random_small_system(rng);
    const auto rho = random_load(sys, rng);
    const double margin = membership_margin(rho, sys);
    const bool lp = membership(rho, sys).member;
    if (std::abs(margin) <= kOracleBand) {
      ++banded;
      continue;
    }
    ++compared;
    members += lp ? 1 : 0;
    const bool grid = testing::grid_member(sys, rho, kOracleSteps);
    if (grid != lp || lp != (margin > 0.0)) {
      ++disagreements;
      if (first.empty()) first = " first disagreement at instance " + std::to_string(i) + " margin=" + detail::fmt(margin);
    }
  }
  CriterionResult r{7, "LP membership matches lattice brute force", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = disagreements == 0 && compared > 0;
  r.detail = std::to_string(compared) + " compared (" + std::to_string(members) + " inside), " + std::to_string(banded) +
             " within the boundary band, " + std::to_string(disagreements) + " disagreements" + first;
  return r;
}

/// Symmetric, diagonally dominant matrix with nonpositive off-diagonals.
inline ScheduleMatrix random_valid_matrix(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> off(-1.0, 0.0), extra(0.1, 2.0);
  std::vector<Vector> m(n, Vector(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = off(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += i == j ? 0.0 : std::abs(m[i][j]);
    m[i][i] = row + extra(rng);
  }
  return ScheduleMatrix(m);
}

inline CriterionResult criterion_8(int selections = 1000, std::uint64_t seed = 8) {
  detail::Stopwatch sw;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> qd(2, 4), kd(1, 4), vd(-1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int scale_fail = 0, empty_fail = 0, zero_fail = 0, balance_fail = 0, sims = 0;
  double worst_balance = 0.0;
  for (int i = 0; i < selections; ++i) {
    const auto n = static_cast<std::size_t>(qd(rng));
    std::vector<ServiceVector> services;
    const int k = kd(rng);
    for (int j = 0; j < k; ++j) {
      Vector v(n);
      for (double& x : v) x = vd(rng) * (u(rng) < 0.5 ? 1.0 : u(rng));
      services.emplace_back(std::move(v));
    }
    const auto sys = single_env(services);
    const auto b = random_valid_matrix(n, rng);
    Vector x(n);
    for (double& v : x) v = u(rng) < 0.35 ? 0.0 : 10.0 * u(rng);

    const auto sel = select(0, x, b, sys);
    for (double alpha : {0.5, 3.0, 100.0}) {
      Vector y(x);
      for (double& v : y) v *= alpha;
      const auto other = select(0, y, b, sys);
      if (other.chosen_index != sel.chosen_index || other.maximizer_indices != sel.maximizer_indices) ++scale_fail;
    }
    for (std::size_t q = 0; q < n; ++q) {
      if (x[q] == 0.0 && sel.chosen[q] > 0.0) ++empty_fail;
    }
    // Zeroing keeps the maximum: with nonpositive off-diagonals (BX)_q <= 0 at empty queues.
    const Vector bx = b.apply(x);
    if (!within_tie(dot(sel.chosen.rates, bx), sel.value, kTieTolerance) && dot(sel.chosen.rates, bx) < sel.value) {
      ++zero_fail;
    }

    if (i % 10 == 0) {
      const TrafficKind kinds[] = {TrafficKind::kFluid, TrafficKind::kJobs, TrafficKind::kStochastic,
                                   TrafficKind::kAdversarialSchedule};
      Vector rho(n);
      for (double& v : rho) v = 0.6 * u(rng);
      TrafficParams p;
      p.window = 5.0;
      p.burst = 2.0;
      p.seed = static_cast<std::uint64_t>(i);
      SimOptions opts;
      opts.initial_workload = x;
      const auto traj = simulate(sys, b, make_traffic(kinds[(i / 10) % 4], rho, p), detail::one_env_trace(), 200.0, opts);
      const double fb = flow_balance_check(traj);
      worst_balance = std::max(worst_balance, fb);
      ++sims;
      if (fb > kFlowBalanceTol) ++balance_fail;
    }
  }
  CriterionResult r{8, "selection invariants and flow balance", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = scale_fail == 0 && empty_fail == 0 && zero_fail == 0 && balance_fail == 0;
  r.detail = std::to_string(selections) + " selections: scale=" + std::to_string(scale_fail) +
             " empty=" + std::to_string(empty_fail) + " zeroing=" + std::to_string(zero_fail) + " failures; " +
             std::to_string(sims) + " trajectories, worst flow balance=" + detail::fmt(worst_balance);
  return r;
}

/// sup over the fixed-step sample times of |X_event(t) - X_fixed(t)|.
inline double integrator_gap(const Trajectory& event, const Trajectory& fixed) {
  double gap = 0.0;
  for (const auto& s : fixed.samples) {
    const Vector x = workload_at(event, s.time);
    for (std::size_t q = 0; q < x.size(); ++q) gap = std::max(gap, std::abs(x[q] - s.workload[q]));
  }
  return gap;
}

struct ConvergenceReport {
  std::vector<double> gaps;
  bool pass = true;
  std::string detail;
};

inline ConvergenceReport convergence(const SystemSpec& sys, const ScheduleMatrix& b, const TrafficTrace& tr,
                                     const EnvironmentTrace& env, double horizon, const SimOptions& opts) {
  const double dts[] = {1e-1, 1e-2, 1e-3};
  SimOptions ev_opts = opts;
  ev_opts.sample_stride = horizon / 100.0;
  const auto event = simulate(sys, b, tr, env, horizon, ev_opts);
  ConvergenceReport rep;
  for (double dt : dts) {
    SimOptions fo = opts;
    fo.sample_stride = dt;
    rep.gaps.push_back(integrator_gap(event, simulate_fixed_step(sys, b, tr, env, horizon, dt, fo)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    rep.pass = rep.pass && rep.gaps[i] <= kGapConstant * dts[i];
    rep.detail += (i ? "," : "gaps=") + detail::fmt(rep.gaps[i]);
  }
  for (std::size_t i = 0; i + 1 < 3; ++i) {
    if (rep.gaps[i + 1] < 1e-9) continue;  // resolved exactly on the grid
    const double order = std::log10(rep.gaps[i] / rep.gaps[i + 1]);
    rep.pass = rep.pass && order >= kOrderLow && order <= kOrderHigh;
    rep.detail += " order=" + detail::fmt(order);
  }
  return rep;
}

inline CriterionResult criterion_9() {
  detail::Stopwatch sw;
  SimOptions drain_opts;
  drain_opts.initial_workload = {5, 3};
  const auto drain = convergence(single_env({{1, 1}}), ScheduleMatrix::identity(2),
                                 make_traffic(TrafficKind::kFluid, {0, 0}), detail::one_env_trace(), 8.0, drain_opts);
  const auto a = config_a();
  const Vector dir{2, 1};
  SimOptions a_opts;
  a_opts.initial_workload = {3, 1};
  const auto run_a = convergence(a, coupled_matrix(),
                                 make_traffic(TrafficKind::kFluid, detail::scaled(dir, 0.9 * boundary_scale(dir, a))),
                                 make_env_trace(EnvTraceKind::kPeriodic, a.pi, 10.37), 30.0, a_opts);
  CriterionResult r{9, "fixed-step integrator converges linearly", false, {}, 0.0};
  r.seconds = sw.seconds();
  const bool nondegenerate = run_a.gaps[0] > 1e-9 && run_a.gaps[1] > 1e-9;
  r.pass = drain.pass && run_a.pass && nondegenerate;
  r.detail = "drain " + drain.detail + "; configuration A " + run_a.detail;
  return r;
}

inline CriterionResult criterion_10() {
  detail::Stopwatch sw;
  SimOptions lag;
  lag.info_lag = 10.0;
  SimOptions noise;
  noise.selection_noise = 1e-3;
  const auto lag_rep = stability_suite(lag);
  const auto noise_rep = stability_suite(noise);
  CriterionResult r{10, "stability under information lag and selection noise", false, {}, 0.0};
  r.seconds = sw.seconds();
  r.pass = lag_rep.runs > 0 && lag_rep.stable == lag_rep.runs && noise_rep.stable == noise_rep.runs;
  r.detail = "lag 10: " + describe(lag_rep) + "; noise 1e-3: " + describe(noise_rep);
  return r;
}

inline CriterionResult run_guarded(int id, const std::function<CriterionResult()>& fn) {
  try {
    return fn();
  } catch (const std::exception& ex) {
    return {id, "criterion " + std::to_string(id), false, std::string("error: ") + ex.what(), 0.0};
  }
}

inline std::vector<CriterionResult> run_all() {
  const std::vector<std::function<CriterionResult()>> all = {
      [] { return criterion_1(); }, [] { return criterion_2(); }, [] { return criterion_3(); },
      [] { return criterion_4(); }, [] { return criterion_5(); }, [] { return criterion_6(); },
      [] { return criterion_7(); }, [] { return criterion_8(); }, [] { return criterion_9(); },
      [] { return criterion_10(); }};
  std::vector<CriterionResult> out;
  for (std::size_t i = 0; i < all.size(); ++i) out.push_back(run_guarded(static_cast<int>(i + 1), all[i]));
  return out;
}

inline std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os << "criterion " << r.id << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  [" << r.detail << "] ("
     << detail::fmt(r.seconds) << " s)";
  return os.str();
}

}  // namespace conesched::repro
