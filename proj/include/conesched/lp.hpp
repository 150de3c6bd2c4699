#pragma once

// Dense two-phase simplex for the small feasibility and optimization problems
// that arise in region queries and sliding-mode resolution. Bland's rule keeps
// degenerate instances from cycling.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "conesched/model.hpp"

namespace conesched::lp {

enum class Relation { kLessEqual, kGreaterEqual, kEqual };
enum class Status { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

struct Options {
  double feasibility_tol = 1e-9;
  double cost_tol = 1e-10;
  double pivot_tol = 1e-11;
  std::size_t max_iterations = 200000;
};

struct Solution {
  Status status = Status::kInfeasible;
  Vector x;
  double objective = std::numeric_limits<double>::quiet_NaN();

  bool optimal() const noexcept { return status == Status::kOptimal; }
};

/// minimize c^T x subject to linear rows and x >= 0.
class Problem {
 public:
  explicit Problem(std::size_t num_vars) : n_(num_vars), cost_(num_vars, 0.0) {}

  std::size_t num_vars() const noexcept { return n_; }
  std::size_t num_rows() const noexcept { return rows_.size(); }

  void set_objective(Vector c) {
    if (c.size() != n_) throw std::invalid_argument("lp: objective size mismatch");
    cost_ = std::move(c);
  }

  void add(Vector coeffs, Relation rel, double rhs) {
    if (coeffs.size() != n_) throw std::invalid_argument("lp: row size mismatch");
    rows_.push_back({std::move(coeffs), rel, rhs});
  }

  Solution solve(const Options& opt = {}) const;

 private:
  struct Row {
    Vector coeffs;
    Relation rel;
    double rhs;
  };

  std::size_t n_;
  Vector cost_;
  std::vector<Row> rows_;
};

namespace detail {

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : m_(rows), cols_(cols), t_(rows * (cols + 1), 0.0), basis_(rows) {}

  double& at(std::size_t i, std::size_t j) { return t_[i * (cols_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return t_[i * (cols_ + 1) + j]; }
  double& rhs(std::size_t i) { return at(i, cols_); }
  double rhs(std::size_t i) const { return at(i, cols_); }
  std::size_t rows() const noexcept { return m_; }
  std::size_t cols() const noexcept { return cols_; }
  std::vector<std::size_t>& basis() noexcept { return basis_; }

  void pivot(std::size_t r, std::size_t c, Vector& reduced, double& reduced_rhs) {
    const double p = at(r, c);
    for (std::size_t j = 0; j <= cols_; ++j) at(r, j) /= p;
    at(r, c) = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) at(i, j) -= f * at(r, j);
      at(i, c) = 0.0;
    }
    const double f = reduced[c];
    if (f != 0.0) {
      for (std::size_t j = 0; j < cols_; ++j) reduced[j] -= f * at(r, j);
      reduced_rhs -= f * rhs(r);
      reduced[c] = 0.0;
    }
    basis_[r] = c;
  }

  /// Runs the simplex loop for `cost` over the columns flagged in `allowed`.
  Status optimize(const Vector& cost, const std::vector<bool>& allowed, const Options& opt, double& objective) {
    Vector reduced(cost);
    double reduced_rhs = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = cost[basis_[i]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j < cols_; ++j) reduced[j] -= cb * at(i, j);
      reduced_rhs -= cb * rhs(i);
    }
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
      std::size_t enter = cols_;
      for (std::size_t j = 0; j < cols_; ++j) {
        if (allowed[j] && reduced[j] < -opt.cost_tol) {
          enter = j;
          break;
        }
      }
      if (enter == cols_) {
        objective = -reduced_rhs;
        return Status::kOptimal;
      }
      std::size_t leave = m_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = at(i, enter);
        if (a <= opt.pivot_tol) continue;
        const double ratio = std::max(0.0, rhs(i)) / a;
        const double tie = 1e-12 * (1.0 + best);
        if (leave == m_ || ratio < best - tie) {
          leave = i;
          best = ratio;
        } else if (ratio <= best + tie && basis_[i] < basis_[leave]) {
          leave = i;
          best = std::min(best, ratio);
        }
      }
      if (leave == m_) return Status::kUnbounded;
      pivot(leave, enter, reduced, reduced_rhs);
    }
    return Status::kIterationLimit;
  }

 private:
  std::size_t m_;
  std::size_t cols_;
  std::vector<double> t_;
  std::vector<std::size_t> basis_;
};

}  // namespace detail

inline Solution Problem::solve(const Options& opt) const {
  const std::size_t m = rows_.size();
  // Column layout: original | slack/surplus per inequality | artificial per row needing one.
  std::vector<Row> rows = rows_;
  double scale = 1.0;
  for (auto& r : rows) {
    if (r.rhs < 0.0) {
      for (double& a : r.coeffs) a = -a;
      r.rhs = -r.rhs;
      if (r.rel == Relation::kLessEqual) r.rel = Relation::kGreaterEqual;
      else if (r.rel == Relation::kGreaterEqual) r.rel = Relation::kLessEqual;
    }
    scale = std::max(scale, r.rhs);
  }
  std::size_t n_slack = 0, n_art = 0;
  for (const auto& r : rows) {
    if (r.rel != Relation::kEqual) ++n_slack;
    if (r.rel != Relation::kLessEqual) ++n_art;
  }
  const std::size_t cols = n_ + n_slack + n_art;
  detail::Tableau tab(m, cols);
  std::size_t slack_col = n_, art_col = n_ + n_slack;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = rows[i];
    for (std::size_t j = 0; j < n_; ++j) tab.at(i, j) = r.coeffs[j];
    tab.rhs(i) = r.rhs;
    if (r.rel == Relation::kLessEqual) {
      tab.at(i, slack_col) = 1.0;
      tab.basis()[i] = slack_col++;
    } else {
      if (r.rel == Relation::kGreaterEqual) tab.at(i, slack_col++) = -1.0;
      tab.at(i, art_col) = 1.0;
      tab.basis()[i] = art_col++;
    }
  }

  Solution sol;
  std::vector<bool> allowed(cols, true);
  if (n_art > 0) {
    Vector phase1(cols, 0.0);
    for (std::size_t j = n_ + n_slack; j < cols; ++j) phase1[j] = 1.0;
    double infeasibility = 0.0;
    const Status st = tab.optimize(phase1, allowed, opt, infeasibility);
    if (st == Status::kIterationLimit) {
      sol.status = st;
      return sol;
    }
    if (infeasibility > opt.feasibility_tol * scale) {
      sol.status = Status::kInfeasible;
      return sol;
    }
    // Drive remaining artificials out of the basis; rows where that is
    // impossible are redundant and keep a zero-valued artificial.
    Vector dummy(cols, 0.0);
    double dummy_rhs = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (tab.basis()[i] < n_ + n_slack) continue;
      std::size_t best = cols;
      double best_abs = opt.pivot_tol;
      for (std::size_t j = 0; j < n_ + n_slack; ++j) {
        if (std::abs(tab.at(i, j)) > best_abs) {
          best_abs = std::abs(tab.at(i, j));
          best = j;
        }
      }
      if (best != cols) tab.pivot(i, best, dummy, dummy_rhs);
    }
    for (std::size_t j = n_ + n_slack; j < cols; ++j) allowed[j] = false;
  }

  Vector phase2(cols, 0.0);
  std::copy(cost_.begin(), cost_.end(), phase2.begin());
  double objective = 0.0;
  const Status st = tab.optimize(phase2, allowed, opt, objective);
  sol.status = st;
  if (st != Status::kOptimal) return sol;
  sol.x.assign(n_, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (tab.basis()[i] < n_) sol.x[tab.basis()[i]] = tab.rhs(i);
  }
  sol.objective = 0.0;
  for (std::size_t j = 0; j < n_; ++j) sol.objective += cost_[j] * sol.x[j];
  return sol;
}

}  // namespace conesched::lp
