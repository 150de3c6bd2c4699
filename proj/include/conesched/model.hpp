#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace conesched {

using Vector = std::vector<double>;

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// Per-queue drain rates of one service configuration. A negative rate feeds
/// the queue (cross traffic) instead of draining it.
struct ServiceVector {
  Vector rates;

  ServiceVector() = default;
  ServiceVector(Vector r) : rates(std::move(r)) {}
  ServiceVector(std::initializer_list<double> r) : rates(r) {}

  std::size_t size() const noexcept { return rates.size(); }
  double operator[](std::size_t q) const { return rates[q]; }
  double& operator[](std::size_t q) { return rates[q]; }
  std::span<const double> view() const noexcept { return rates; }

  friend bool operator==(const ServiceVector& a, const ServiceVector& b) { return a.rates == b.rates; }
  friend bool operator<(const ServiceVector& a, const ServiceVector& b) {
    return std::lexicographical_compare(a.rates.begin(), a.rates.end(), b.rates.begin(), b.rates.end());
  }
};

inline std::string to_string(const ServiceVector& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline constexpr std::size_t kDefaultClosureCap = 100000;

/// Smallest superset of `services` closed under replacing one strictly
/// positive component by zero. The result is deduplicated and sorted
/// lexicographically, which is the canonical order used for tie-breaking.
inline std::vector<ServiceVector> complete_closure(std::span<const ServiceVector> services,
                                                   std::size_t cap = kDefaultClosureCap) {
  if (services.empty()) throw ModelError("complete_closure: empty service set");
  const std::size_t q_count = services.front().size();
  std::set<ServiceVector> closed;
  std::vector<ServiceVector> frontier;
  for (const auto& s : services) {
    if (s.size() != q_count) throw ModelError("complete_closure: inconsistent service vector dimensions");
    if (!all_finite(s.view())) throw ModelError("complete_closure: non-finite service rate");
    if (closed.insert(s).second) frontier.push_back(s);
  }
  while (!frontier.empty()) {
    ServiceVector s = std::move(frontier.back());
    frontier.pop_back();
    for (std::size_t q = 0; q < q_count; ++q) {
      if (s[q] <= 0.0) continue;
      ServiceVector sub = s;
      sub[q] = 0.0;
      if (closed.insert(sub).second) {
        if (closed.size() > cap) {
          throw ModelError("complete_closure: closure exceeds cap of " + std::to_string(cap) + " vectors");
        }
        frontier.push_back(std::move(sub));
      }
    }
  }
  return {closed.begin(), closed.end()};
}

/// True when every strictly positive component of every vector can be zeroed
/// without leaving the set.
inline bool is_complete(std::span<const ServiceVector> services) {
  std::set<ServiceVector> lookup(services.begin(), services.end());
  for (const auto& s : services) {
    for (std::size_t q = 0; q < s.size(); ++q) {
      if (s[q] <= 0.0) continue;
      ServiceVector sub = s;
      sub[q] = 0.0;
      if (!lookup.count(sub)) return false;
    }
  }
  return true;
}

struct EnvironmentSpec {
  /// Canonical (sorted, deduplicated) service set.
  std::vector<ServiceVector> services;
  bool completed = false;
};

/// Builds an environment in canonical order, optionally applying the closure.
inline EnvironmentSpec make_environment(std::vector<ServiceVector> services, bool complete = true,
                                        std::size_t cap = kDefaultClosureCap) {
  EnvironmentSpec env;
  if (complete) {
    env.services = complete_closure(services, cap);
    env.completed = true;
  } else {
    std::sort(services.begin(), services.end());
    services.erase(std::unique(services.begin(), services.end()), services.end());
    env.services = std::move(services);
    env.completed = false;
  }
  return env;
}

struct SystemSpec {
  std::size_t queues = 0;
  std::vector<EnvironmentSpec> environments;
  Vector pi;

  std::size_t num_environments() const noexcept { return environments.size(); }
};

/// Applies the closure to every environment that is not yet completed.
inline SystemSpec completed(SystemSpec spec, std::size_t cap = kDefaultClosureCap) {
  for (auto& env : spec.environments) {
    if (!env.completed) env = make_environment(env.services, true, cap);
  }
  return spec;
}

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool ok() const noexcept { return violations.empty(); }
};

inline ValidationReport validate_system(const SystemSpec& spec) {
  ValidationReport report;
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
  };
  if (spec.queues == 0) report.violations.push_back("queue count must be positive");
  if (spec.environments.empty()) report.violations.push_back("no environments");
  if (spec.pi.size() != spec.environments.size()) {
    report.violations.push_back("pi has " + std::to_string(spec.pi.size()) + " entries for " +
                                std::to_string(spec.environments.size()) + " environments");
  }
  double total = 0.0;
  for (std::size_t e = 0; e < spec.pi.size(); ++e) {
    const double p = spec.pi[e];
    if (!std::isfinite(p) || p <= 0.0) {
      report.violations.push_back("pi of environment " + std::to_string(e + 1) + " is not positive");
    }
    total += p;
  }
  if (!spec.pi.empty() && std::abs(total - 1.0) > 1e-12) {
    report.violations.push_back("pi sums to " + fmt(total));
  }
  bool any_nonnegative_vector = false;
  for (std::size_t e = 0; e < spec.environments.size(); ++e) {
    const auto& env = spec.environments[e];
    const std::string label = "environment " + std::to_string(e + 1);
    if (env.services.empty()) {
      report.violations.push_back(label + ": empty service set");
      continue;
    }
    bool dims_ok = true;
    for (const auto& s : env.services) {
      if (s.size() != spec.queues) dims_ok = false;
      if (!all_finite(s.view())) report.violations.push_back(label + ": non-finite service rate");
      if (std::all_of(s.rates.begin(), s.rates.end(), [](double v) { return v >= 0.0; })) {
        any_nonnegative_vector = true;
      }
    }
    if (!dims_ok) {
      report.violations.push_back(label + ": service vector length differs from queue count " +
                                  std::to_string(spec.queues));
      continue;
    }
    const bool closed = is_complete(env.services);
    if (env.completed && !closed) {
      report.violations.push_back(label + ": marked completed but not closed under sub-vectors");
    } else if (!env.completed && !closed) {
      report.warnings.push_back(label + ": not closed under sub-vectors (implicit closure required)");
    }
  }
  if (!spec.environments.empty() && !any_nonnegative_vector) {
    report.warnings.push_back("no environment offers a service vector with all components >= 0");
  }
  return report;
}

struct MatrixValidity {
  bool symmetric = false;
  bool positive_definite = false;
  bool offdiag_nonpositive = false;

  bool valid() const noexcept { return symmetric && positive_definite && offdiag_nonpositive; }
};

/// Square matrix parameterizing a cone schedule. Validity is computed once at
/// construction; matrices that fail it are still usable (counterexamples).
class ScheduleMatrix {
 public:
  ScheduleMatrix() = default;

  explicit ScheduleMatrix(const std::vector<Vector>& rows) : n_(rows.size()), entries_(n_ * n_) {
    if (n_ == 0) throw ModelError("schedule matrix must be non-empty");
    for (std::size_t i = 0; i < n_; ++i) {
      if (rows[i].size() != n_) throw ModelError("schedule matrix must be square");
      if (!all_finite(rows[i])) throw ModelError("schedule matrix has non-finite entries");
      std::copy(rows[i].begin(), rows[i].end(), entries_.begin() + static_cast<std::ptrdiff_t>(i * n_));
    }
    validity_ = compute_validity();
  }

  static ScheduleMatrix identity(std::size_t n) {
    std::vector<Vector> rows(n, Vector(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) rows[i][i] = 1.0;
    return ScheduleMatrix(rows);
  }

  std::size_t dim() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  const MatrixValidity& validity() const noexcept { return validity_; }

  std::vector<Vector> rows() const {
    std::vector<Vector> out(n_, Vector(n_));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) out[i][j] = (*this)(i, j);
    return out;
  }

  /// B x
  Vector apply(std::span<const double> x) const {
    Vector y(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) y[i] += entries_[i * n_ + j] * x[j];
    return y;
  }

  /// B^T w, so that <w, B u> == <B^T w, u>.
  Vector apply_transpose(std::span<const double> w) const {
    Vector y(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) y[j] += entries_[i * n_ + j] * w[i];
    return y;
  }

  /// <x, B x>
  double quadratic(std::span<const double> x) const { return dot(x, apply(x)); }

 private:
  MatrixValidity compute_validity() const {
    MatrixValidity v;
    v.symmetric = true;
    v.offdiag_nonpositive = true;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const double a = (*this)(i, j);
        const double b = (*this)(j, i);
        if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(a))) v.symmetric = false;
        if (i != j && a > 0.0) v.offdiag_nonpositive = false;
      }
    }
    // Elimination without pivoting: the k-th pivot is the ratio of the k-th
    // and (k-1)-th leading principal minors, so all minors are positive iff
    // every pivot is.
    std::vector<double> work(entries_);
    v.positive_definite = true;
    for (std::size_t k = 0; k < n_; ++k) {
      const double pivot = work[k * n_ + k];
      if (!(pivot > 1e-12)) {
        v.positive_definite = false;
        break;
      }
      for (std::size_t i = k + 1; i < n_; ++i) {
        const double f = work[i * n_ + k] / pivot;
        for (std::size_t j = k; j < n_; ++j) work[i * n_ + j] -= f * work[k * n_ + j];
      }
    }
    return v;
  }

  std::size_t n_ = 0;
  std::vector<double> entries_;
  MatrixValidity validity_;
};

inline MatrixValidity validate_matrix(const ScheduleMatrix& b) { return b.validity(); }

// ---------------------------------------------------------------------------
// Trace descriptions. Runtime generators live in traces.hpp.

enum class TrafficKind { kFluid, kJobs, kStochastic, kAdversarialEnv, kAdversarialSchedule };

struct TrafficParams {
  /// Job size per queue (jobs, stochastic). Empty means 1.0 everywhere.
  Vector job_size;
  /// Decision window of the adversarial kinds.
  double window = 0.0;
  /// Burst allowance: released work stays within [rho t - burst, rho t + burst].
  double burst = 0.0;
  /// Zero-based environment in which each queue's budget is released
  /// (adversarial-env). Empty selects the least favourable state per queue.
  std::vector<std::size_t> designated_env;
  std::uint64_t seed = 1;
};

struct TrafficTrace {
  TrafficKind kind = TrafficKind::kFluid;
  Vector load;
  TrafficParams params;
};

enum class EnvTraceKind { kPeriodic, kRandomHolding };

struct EnvironmentTrace {
  EnvTraceKind kind = EnvTraceKind::kPeriodic;
  Vector pi;
  /// Cycle length (periodic) or mean cycle length (random holding).
  double cycle = 10.0;
  std::uint64_t seed = 1;
};

inline std::string to_string(TrafficKind k) {
  switch (k) {
    case TrafficKind::kFluid: return "fluid";
    case TrafficKind::kJobs: return "jobs";
    case TrafficKind::kStochastic: return "stochastic";
    case TrafficKind::kAdversarialEnv: return "adversarial-env";
    case TrafficKind::kAdversarialSchedule: return "adversarial-schedule";
  }
  return "unknown";
}

inline std::string to_string(EnvTraceKind k) {
  return k == EnvTraceKind::kPeriodic ? "periodic" : "random-holding";
}

}  // namespace conesched
