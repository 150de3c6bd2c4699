#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "conesched/model.hpp"

using namespace conesched;

namespace {

std::vector<ServiceVector> sorted(std::vector<ServiceVector> v) {
  std::sort(v.begin(), v.end());
  return v;
}

bool contains(const std::vector<ServiceVector>& set, const ServiceVector& s) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

}  // namespace

TEST(Closure, AddsAllSubVectors) {
  const std::vector<ServiceVector> in{{1, 1}};
  EXPECT_EQ(complete_closure(in), sorted({{1, 1}, {1, 0}, {0, 1}, {0, 0}}));
}

TEST(Closure, AddsZeroForUnitVectors) {
  const std::vector<ServiceVector> in{{1, 0}, {0, 1}};
  EXPECT_EQ(complete_closure(in), sorted({{1, 0}, {0, 1}, {0, 0}}));
}

TEST(Closure, NegativeEntriesAreKept) {
  const std::vector<ServiceVector> in{{1.2, -0.8}};
  EXPECT_EQ(complete_closure(in), sorted({{1.2, -0.8}, {0, -0.8}}));
}

TEST(Closure, OutputIsCanonical) {
  const std::vector<ServiceVector> in{{0, 3}, {1, 0}, {0, 3}};
  const auto out = complete_closure(in);
  EXPECT_TRUE(std::is_sorted(out.begin(), out.end()));
  EXPECT_EQ(std::adjacent_find(out.begin(), out.end()), out.end());
  EXPECT_EQ(out, sorted({{0, 0}, {0, 3}, {1, 0}}));
}

TEST(Closure, CapIsEnforced) {
  const std::vector<ServiceVector> in{{1, 1, 1, 1, 1, 1}};
  EXPECT_EQ(complete_closure(in).size(), 64U);
  EXPECT_THROW(complete_closure(in, 10), ModelError);
}

TEST(Closure, Errors) {
  EXPECT_THROW(complete_closure(std::vector<ServiceVector>{}), ModelError);
  EXPECT_THROW(complete_closure(std::vector<ServiceVector>{{1, 0}, {1}}), ModelError);
  EXPECT_THROW(complete_closure(std::vector<ServiceVector>{{1, std::nan("")}}), ModelError);
}

TEST(ClosureProperty, IdempotentMonotoneAndNegativePreserving) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> qd(1, 4), kd(1, 4), vd(-2, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const int q = qd(rng);
    std::vector<ServiceVector> in;
    for (int k = kd(rng); k > 0; --k) {
      Vector v(static_cast<std::size_t>(q));
      for (double& x : v) x = 0.5 * vd(rng);
      in.emplace_back(std::move(v));
    }
    const auto once = complete_closure(in);
    EXPECT_EQ(complete_closure(once), once);
    EXPECT_TRUE(is_complete(once));
    for (const auto& s : in) EXPECT_TRUE(contains(once, s));
    // Every added vector agrees with some input on all negative entries.
    for (const auto& s : once) {
      bool matched = false;
      for (const auto& src : in) {
        bool ok = true;
        for (std::size_t i = 0; i < s.size() && ok; ++i) {
          ok = src[i] < 0.0 ? s[i] == src[i] : (s[i] == src[i] || s[i] == 0.0);
        }
        matched = matched || ok;
      }
      EXPECT_TRUE(matched) << to_string(s);
    }
  }
}

TEST(Matrix, IdentityIsValid) {
  const auto v = validate_matrix(ScheduleMatrix::identity(3));
  EXPECT_TRUE(v.symmetric);
  EXPECT_TRUE(v.positive_definite);
  EXPECT_TRUE(v.offdiag_nonpositive);
  EXPECT_TRUE(v.valid());
}

TEST(Matrix, EachCounterexampleFlipsOneFlag) {
  const auto base = validate_matrix(ScheduleMatrix({{2, -1}, {-1, 2}}));
  ASSERT_TRUE(base.valid());

  const auto positive_off = validate_matrix(ScheduleMatrix({{2, 1}, {1, 2}}));
  EXPECT_TRUE(positive_off.symmetric);
  EXPECT_TRUE(positive_off.positive_definite);
  EXPECT_FALSE(positive_off.offdiag_nonpositive);

  const auto indefinite = validate_matrix(ScheduleMatrix({{1, -2}, {-2, 1}}));
  EXPECT_TRUE(indefinite.symmetric);
  EXPECT_FALSE(indefinite.positive_definite);
  EXPECT_TRUE(indefinite.offdiag_nonpositive);

  const auto asymmetric = validate_matrix(ScheduleMatrix({{2, -1}, {-0.5, 2}}));
  EXPECT_FALSE(asymmetric.symmetric);
  EXPECT_TRUE(asymmetric.positive_definite);
  EXPECT_TRUE(asymmetric.offdiag_nonpositive);
}

TEST(Matrix, SemidefiniteIsNotPositiveDefinite) {
  EXPECT_FALSE(validate_matrix(ScheduleMatrix({{1, -1}, {-1, 1}})).positive_definite);
}

TEST(Matrix, ApplyAndTranspose) {
  const ScheduleMatrix b({{1, 2}, {3, 4}});
  EXPECT_EQ(b.apply(Vector{1, 1}), (Vector{3, 7}));
  EXPECT_EQ(b.apply_transpose(Vector{1, 1}), (Vector{4, 6}));
  EXPECT_DOUBLE_EQ(b.quadratic(Vector{1, 1}), 10.0);
}

TEST(Matrix, RejectsMalformedInput) {
  EXPECT_THROW(ScheduleMatrix(std::vector<Vector>{}), ModelError);
  EXPECT_THROW(ScheduleMatrix({{1, 0}, {0}}), ModelError);
  EXPECT_THROW(ScheduleMatrix({{1, 0}, {0, INFINITY}}), ModelError);
}

namespace {

SystemSpec two_envs(Vector pi) {
  SystemSpec s;
  s.queues = 2;
  s.environments = {make_environment({{1, 0}, {0, 1}}), make_environment({{1, 1}})};
  s.pi = std::move(pi);
  return s;
}

bool mentions(const std::vector<std::string>& list, const std::string& needle) {
  return std::any_of(list.begin(), list.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST(ValidateSystem, ConsistentSpecHasNoViolations) {
  const auto r = validate_system(two_envs({0.5, 0.5}));
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(r.violations.empty());
}

TEST(ValidateSystem, PiMustSumToOne) {
  const auto r = validate_system(two_envs({0.5, 0.4}));
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r.violations, "pi sums to 0.9"));
}

TEST(ValidateSystem, EmptyServiceSet) {
  auto s = two_envs({0.5, 0.5});
  s.environments[1].services.clear();
  EXPECT_TRUE(mentions(validate_system(s).violations, "empty service set"));
}

TEST(ValidateSystem, DimensionsAndFlags) {
  auto s = two_envs({0.5, 0.5});
  s.environments[0].services.push_back(ServiceVector{1, 1, 1});
  EXPECT_TRUE(mentions(validate_system(s).violations, "length differs"));

  auto t = two_envs({0.5, 0.5});
  t.environments[1].services = {{1, 1}};
  t.environments[1].completed = true;
  EXPECT_TRUE(mentions(validate_system(t).violations, "not closed"));
  t.environments[1].completed = false;
  const auto r = validate_system(t);
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(mentions(r.warnings, "implicit closure"));

  auto u = two_envs({1.2, -0.2});
  EXPECT_TRUE(mentions(validate_system(u).violations, "not positive"));
}
