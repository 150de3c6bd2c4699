#include <gtest/gtest.h>

#include "conesched/analysis.hpp"
#include "conesched/repro.hpp"
#include "conesched/sim.hpp"
#include "oracle/oracles.hpp"

using namespace conesched;
using repro::single_env;

namespace {

EnvironmentTrace one_env() { return make_env_trace(EnvTraceKind::kPeriodic, {1.0}, 10.0); }

Trajectory drain_run(double horizon = 8.0) {
  SimOptions o;
  o.initial_workload = {5, 3};
  o.sample_stride = 0.25;
  return simulate(single_env({{1, 1}}), ScheduleMatrix::identity(2), make_traffic(TrafficKind::kFluid, {0, 0}),
                  one_env(), horizon, o);
}

Trajectory config_a_run(TrafficKind kind, double horizon, EnvTraceKind env_kind = EnvTraceKind::kPeriodic) {
  const auto sys = repro::config_a();
  TrafficParams p;
  p.window = 10;
  p.burst = 5;
  p.seed = 3;
  return simulate(sys, ScheduleMatrix::identity(2), make_traffic(kind, {0.6, 0.6}, p),
                  make_env_trace(env_kind, sys.pi, 10.0, 5), horizon);
}

}  // namespace

TEST(Simulate, DrainMatchesClosedForm) {
  const auto traj = drain_run();
  for (const auto& s : traj.samples) {
    const Vector expect = oracle::drain_workload(s.time);
    EXPECT_NEAR(s.workload[0], expect[0], 1e-12) << "t=" << s.time;
    EXPECT_NEAR(s.workload[1], expect[1], 1e-12) << "t=" << s.time;
  }
  EXPECT_EQ(traj.final_workload, (Vector{0, 0}));
  EXPECT_NEAR(usage_time(traj, 0, ServiceVector{1, 1}), 3.0, 1e-12);
  EXPECT_NEAR(usage_time(traj, 0, ServiceVector{1, 0}), 2.0, 1e-12);
}

TEST(Simulate, CounterexampleOneStarvesQueueOne) {
  const auto traj = simulate(repro::ce1_system(), repro::ce1_matrix(), make_traffic(TrafficKind::kFluid, {0.2, 0.2}),
                             one_env(), 1e4);
  EXPECT_NEAR(traj.final_workload[0] / 1e4, 0.2, 0.02);
  EXPECT_LE(traj.served[0] / 1e4, 1e-6);
}

TEST(Simulate, ConfigAStableAtInteriorLoad) {
  const auto traj = config_a_run(TrafficKind::kFluid, 1e4);
  EXPECT_LE(std::max(traj.final_workload[0], traj.final_workload[1]) / 1e4, 0.01);
  EXPECT_EQ(traj.unresolved_regimes, 0U);
}

TEST(Simulate, InvariantsAcrossTrafficKinds) {
  for (auto kind : {TrafficKind::kFluid, TrafficKind::kJobs, TrafficKind::kStochastic, TrafficKind::kAdversarialEnv,
                    TrafficKind::kAdversarialSchedule}) {
    for (auto env_kind : {EnvTraceKind::kPeriodic, EnvTraceKind::kRandomHolding}) {
      const auto traj = config_a_run(kind, 2000.0, env_kind);
      SCOPED_TRACE(to_string(kind) + "/" + to_string(env_kind));
      EXPECT_LE(flow_balance_check(traj), 1e-8);
      for (const auto& s : traj.samples) {
        for (std::size_t q = 0; q < 2; ++q) {
          EXPECT_GE(s.workload[q], -1e-9);
          // Non-idling: no positive service on an empty queue that receives no fluid.
          if (s.workload[q] == 0.0 && kind != TrafficKind::kFluid) {
            EXPECT_LE(s.service[q], 1e-12);
          }
        }
      }
      if (env_kind == EnvTraceKind::kPeriodic) {
        EXPECT_NEAR(traj.occupancy[0] / traj.horizon, 0.5, 2.0 / 10.0);
      }
    }
  }
}

TEST(Simulate, Deterministic) {
  const auto a = config_a_run(TrafficKind::kStochastic, 500.0, EnvTraceKind::kRandomHolding);
  const auto b = config_a_run(TrafficKind::kStochastic, 500.0, EnvTraceKind::kRandomHolding);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].time, b.samples[i].time);
    EXPECT_EQ(a.samples[i].workload, b.samples[i].workload);
  }
  EXPECT_EQ(a.final_workload, b.final_workload);
  EXPECT_EQ(a.events.total, b.events.total);
}

TEST(Simulate, EventCapIsEnforced) {
  SimOptions o;
  o.event_cap = 10;
  const auto sys = repro::config_a();
  EXPECT_THROW(simulate(sys, ScheduleMatrix::identity(2), make_traffic(TrafficKind::kJobs, {0.6, 0.6}),
                        make_env_trace(EnvTraceKind::kPeriodic, sys.pi, 10.0), 1000.0, o),
               SimulationError);
}

TEST(Simulate, RejectsBadInput) {
  const auto sys = repro::config_a();
  const auto tr = make_traffic(TrafficKind::kFluid, {0.1, 0.1});
  const auto env = make_env_trace(EnvTraceKind::kPeriodic, sys.pi, 10.0);
  EXPECT_ANY_THROW(simulate(sys, ScheduleMatrix::identity(2), tr, env, 0.0));
  EXPECT_ANY_THROW(simulate(sys, ScheduleMatrix::identity(3), tr, env, 10.0));
  SimOptions o;
  o.initial_workload = {-1, 0};
  EXPECT_ANY_THROW(simulate(sys, ScheduleMatrix::identity(2), tr, env, 10.0, o));
  o.initial_workload = {};
  o.info_lag = -1;
  EXPECT_ANY_THROW(simulate(sys, ScheduleMatrix::identity(2), tr, env, 10.0, o));
}

TEST(Simulate, InfoLagAndNoiseKeepFlowBalance) {
  const auto sys = repro::config_a();
  SimOptions o;
  o.info_lag = 5.0;
  o.selection_noise = 1e-3;
  const auto traj = simulate(sys, repro::coupled_matrix(), make_traffic(TrafficKind::kFluid, {0.6, 0.6}),
                             make_env_trace(EnvTraceKind::kPeriodic, sys.pi, 10.0), 2000.0, o);
  EXPECT_LE(flow_balance_check(traj), 1e-8);
  EXPECT_LE(std::max(traj.final_workload[0], traj.final_workload[1]) / 2000.0, 0.01);
}

TEST(FixedStep, DrainReachesZero) {
  SimOptions o;
  o.initial_workload = {5, 3};
  o.sample_stride = 1e-3;
  const auto traj = simulate_fixed_step(single_env({{1, 1}}), ScheduleMatrix::identity(2),
                                        make_traffic(TrafficKind::kFluid, {0, 0}), one_env(), 6.0, 1e-3, o);
  const Vector x5 = workload_at(traj, 5.0);
  EXPECT_NEAR(x5[0], 0.0, 5e-3);
  EXPECT_NEAR(x5[1], 0.0, 5e-3);
  EXPECT_LE(flow_balance_check(traj), 1e-8);
}

TEST(FixedStep, LargeStepHoldsOneSelection) {
  SimOptions o;
  o.initial_workload = {5, 3};
  const auto traj = simulate_fixed_step(single_env({{1, 1}}), ScheduleMatrix::identity(2),
                                        make_traffic(TrafficKind::kFluid, {0, 0}), one_env(), 4.0, 10.0, o);
  // (1,1) is selected once; queue 2 is clamped at zero after t = 3.
  EXPECT_EQ(traj.final_workload, (Vector{1, 0}));
  EXPECT_NEAR(usage_time(traj, 0, ServiceVector{1, 1}), 4.0, 1e-12);
  EXPECT_EQ(traj.usage[0].size(), 1U);
}

TEST(FixedStep, ConvergesToEventDriven) {
  const auto sys = repro::config_a();
  const auto tr = make_traffic(TrafficKind::kFluid, {0.9, 0.45});
  const auto env = make_env_trace(EnvTraceKind::kPeriodic, sys.pi, 10.37);
  SimOptions o;
  o.initial_workload = {3, 1};
  const auto rep = repro::convergence(sys, repro::coupled_matrix(), tr, env, 30.0, o);
  ASSERT_EQ(rep.gaps.size(), 3U);
  EXPECT_LT(rep.gaps[2], rep.gaps[1]);
  EXPECT_LT(rep.gaps[1], rep.gaps[0]);
  EXPECT_LE(rep.gaps[1], 5 * 1e-2);
}

TEST(WorkloadAt, InterpolatesBetweenSamples) {
  const auto traj = drain_run();
  const Vector x = workload_at(traj, 1.1);
  EXPECT_NEAR(x[0], 3.9, 1e-12);
  EXPECT_NEAR(x[1], 1.9, 1e-12);
}
