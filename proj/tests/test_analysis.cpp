#include <gtest/gtest.h>

#include <cmath>

#include "conesched/analysis.hpp"
#include "conesched/repro.hpp"

using namespace conesched;

namespace {

/// Hand-built trajectory with workload f(t) sampled at n + 1 evenly spaced times.
template <class F>
Trajectory fixture(double horizon, int n, F f, Vector arrival_rate) {
  Trajectory t;
  t.queues = arrival_rate.size();
  t.horizon = horizon;
  t.initial_workload = f(0.0);
  for (int i = 0; i <= n; ++i) {
    Sample s;
    s.time = horizon * i / n;
    s.workload = f(s.time);
    s.arrived = s.served = Vector(t.queues, 0.0);
    t.samples.push_back(s);
  }
  t.arrived = arrival_rate;
  for (double& v : t.arrived) v *= horizon;
  t.served = t.arrived;
  t.final_workload = t.samples.back().workload;
  return t;
}

EnvironmentTrace one_env() { return make_env_trace(EnvTraceKind::kPeriodic, {1.0}, 10.0); }

Trajectory drain(double horizon) {
  SimOptions o;
  o.initial_workload = {5, 3};
  o.sample_stride = 0.1;
  return simulate(repro::single_env({{1, 1}}), ScheduleMatrix::identity(2), make_traffic(TrafficKind::kFluid, {0, 0}),
                  one_env(), horizon, o);
}

Trajectory ce1(double horizon) {
  return simulate(repro::ce1_system(), repro::ce1_matrix(), make_traffic(TrafficKind::kFluid, {0.2, 0.2}), one_env(),
                  horizon);
}

}  // namespace

TEST(Verdict, BoundedWorkloadIsStable) {
  const auto t = fixture(1e4, 100, [](double) { return Vector{3, 1}; }, {0.5, 0.5});
  const auto v = rate_stability_metric(t);
  EXPECT_EQ(v.verdict, Verdict::kStable);
  EXPECT_NEAR(v.max_tail_slope(), 0.0, 1e-12);
}

TEST(Verdict, LinearGrowthIsUnstable) {
  const auto t = fixture(1e4, 100, [](double s) { return Vector{0.2 * s, 0}; }, {0.2, 0.2});
  const auto v = rate_stability_metric(t, 0.5, 0.39);
  EXPECT_NEAR(v.slope[0], 0.2, 1e-12);
  EXPECT_NEAR(v.tail_slope[0], 0.2, 1e-9);
  EXPECT_EQ(v.verdict, Verdict::kUnstable);
  EXPECT_EQ(rate_stability_metric(t, 0.5, 0.2).verdict, Verdict::kUnstable);
  EXPECT_EQ(rate_stability_metric(t, 0.5, 0.5).verdict, Verdict::kInconclusive);
  EXPECT_EQ(rate_stability_metric(t, 0.5, 0.0).verdict, Verdict::kInconclusive);
}

TEST(Verdict, SublinearGrowthIsStable) {
  const auto t = fixture(1e6, 1000, [](double s) { return Vector{std::sqrt(s)}; }, {0.3});
  EXPECT_EQ(rate_stability_metric(t).verdict, Verdict::kStable);
}

TEST(Verdict, ThresholdsAreConfigurable) {
  const auto t = fixture(1e4, 100, [](double s) { return Vector{0.005 * s}; }, {0.5});
  EXPECT_EQ(rate_stability_metric(t).verdict, Verdict::kStable);
  VerdictThresholds strict;
  strict.stable_relative = 0.001;
  EXPECT_NE(rate_stability_metric(t, 0.5, 0.0, strict).verdict, Verdict::kStable);
}

TEST(Verdict, Errors) {
  Trajectory empty;
  empty.horizon = 1.0;
  EXPECT_THROW(rate_stability_metric(empty), std::invalid_argument);
  const auto t = fixture(10, 10, [](double) { return Vector{0}; }, {0});
  EXPECT_THROW(rate_stability_metric(t, 1.5), std::invalid_argument);
}

TEST(EffectiveRates, StableRunMatchesLoad) {
  const auto sys = repro::config_a();
  const auto traj = simulate(sys, ScheduleMatrix::identity(2), make_traffic(TrafficKind::kFluid, {0.6, 0.6}),
                             make_env_trace(EnvTraceKind::kPeriodic, sys.pi, 10.0), 1e4);
  const Vector r = effective_service_rates(traj);
  EXPECT_NEAR(r[0], 0.6, 0.01);
  EXPECT_NEAR(r[1], 0.6, 0.01);
}

TEST(EffectiveRates, DrainEqualsInitialWorkOverHorizon) {
  const Vector r = effective_service_rates(drain(10.0));
  EXPECT_NEAR(r[0], 0.5, 1e-12);
  EXPECT_NEAR(r[1], 0.3, 1e-12);
}

TEST(EffectiveRates, CounterexampleNeverServesQueueOne) {
  EXPECT_LE(effective_service_rates(ce1(1e4))[0], 1e-6);
}

TEST(Lyapunov, ZeroTrajectory) {
  const auto sys = repro::config_a();
  const auto traj = simulate(sys, ScheduleMatrix::identity(2), make_traffic(TrafficKind::kFluid, {0, 0}),
                             make_env_trace(EnvTraceKind::kPeriodic, sys.pi, 10.0), 100.0);
  for (double v : lyapunov_series(traj, ScheduleMatrix::identity(2)).value) EXPECT_EQ(v, 0.0);
}

TEST(Lyapunov, DrainStrictlyDecreasesUntilEmpty) {
  const auto series = lyapunov_series(drain(8.0), ScheduleMatrix::identity(2));
  ASSERT_GT(series.value.size(), 10U);
  EXPECT_EQ(series.value.front(), 34.0);
  for (std::size_t i = 1; i < series.value.size(); ++i) {
    if (series.value[i - 1] > 0.0) {
      EXPECT_LT(series.value[i], series.value[i - 1]);
    }
  }
  EXPECT_EQ(series.value.back(), 0.0);
  EXPECT_EQ(series.decrease_fraction, 1.0);
}

TEST(Lyapunov, CounterexampleGrowsQuadratically) {
  const auto series = lyapunov_series(ce1(1e4), repro::ce1_matrix());
  EXPECT_NEAR(growth_exponent(series), 2.0, 0.2);
}

TEST(Lyapunov, InvariantUnderQueueRelabeling) {
  const SystemSpec a = repro::two_env({{1, 0}, {0, 1}}, {{1, 1}, {2, 0}}, 0.4);
  const SystemSpec b = repro::two_env({{0, 1}, {1, 0}}, {{1, 1}, {0, 2}}, 0.4);
  const ScheduleMatrix ma({{2, -1}, {-1, 3}});
  const ScheduleMatrix mb({{3, -1}, {-1, 2}});
  SimOptions oa, ob;
  oa.initial_workload = {4, 1};
  ob.initial_workload = {1, 4};
  oa.sample_stride = ob.sample_stride = 1.0;
  const auto ta = simulate(a, ma, make_traffic(TrafficKind::kFluid, {0.5, 0.3}),
                           make_env_trace(EnvTraceKind::kPeriodic, a.pi, 10.0), 500.0, oa);
  const auto tb = simulate(b, mb, make_traffic(TrafficKind::kFluid, {0.3, 0.5}),
                           make_env_trace(EnvTraceKind::kPeriodic, b.pi, 10.0), 500.0, ob);
  const auto la = lyapunov_series(ta, ma);
  const auto lb = lyapunov_series(tb, mb);
  // Sample times at the stride coincide; switch-time samples are permuted consistently too.
  ASSERT_EQ(la.value.size(), lb.value.size());
  for (std::size_t i = 0; i < la.value.size(); ++i) {
    EXPECT_NEAR(la.time[i], lb.time[i], 1e-9);
    EXPECT_NEAR(la.value[i], lb.value[i], 1e-7 * std::max(1.0, la.value[i]));
  }
}

TEST(FlowBalance, EventDrivenAndFixedStepRuns) {
  EXPECT_LE(flow_balance_check(ce1(1e3)), 1e-8);
  SimOptions o;
  o.initial_workload = {5, 3};
  const auto fs = simulate_fixed_step(repro::single_env({{1, 1}}), ScheduleMatrix::identity(2),
                                      make_traffic(TrafficKind::kFluid, {0.2, 0.1}), one_env(), 20.0, 1e-3, o);
  EXPECT_LE(flow_balance_check(fs), 1e-8);
}

TEST(FlowBalance, CorruptedFixtureIsFlagged) {
  auto traj = drain(8.0);
  traj.samples[traj.samples.size() / 2].workload[0] += 0.01;
  EXPECT_GT(flow_balance_check(traj), 1e-3);
}
