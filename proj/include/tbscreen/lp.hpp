#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tbs {

enum class LpStatus { Optimal, Infeasible, Unbounded };

// Inequality-form program: minimize c.x subject to A x >= b, x >= 0.
struct LpProblem {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // row-major, rows x cols
  std::vector<double> b;  // length rows
  std::vector<double> c;  // length cols

  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const {
    return a[static_cast<std::size_t>(i) * cols + j];
  }
};

// objective is +inf for Infeasible and -inf for Unbounded; x and duals are
// then empty.  Duals are for the >= rows, nonnegative at optimality.
struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> x;
  std::vector<double> duals;
};

// Primal simplex over an equality system M z = rhs, z >= 0, with a dense
// explicit basis inverse.  Columns are added incrementally; reoptimize()
// resumes from the previous basis, which stays feasible because the right
// hand side never changes.  Intended use: restricted masters in column
// generation, and as the core of solve_lp().
class SimplexEngine {
 public:
  explicit SimplexEngine(std::vector<double> rhs)
      : m_(static_cast<int>(rhs.size())), b_(std::move(rhs)) {}

  int rows() const { return m_; }
  int num_columns() const { return static_cast<int>(cols_.size()); }
  long iterations() const { return iters_; }

  int add_column(const std::vector<double>& col, double cost) {
    if (static_cast<int>(col.size()) != m_)
      throw std::invalid_argument("SimplexEngine: column length mismatch");
    cols_.push_back(col);
    cost_.push_back(cost);
    banned_.push_back(0);
    in_basis_.push_back(0);
    return num_columns() - 1;
  }

  void set_cost(int j, double cost) { cost_[j] = cost; }

  // A banned column never enters the basis (it may remain basic at zero).
  void ban(int j) { banned_[j] = 1; }

  // Starts the primal iteration from a caller-supplied feasible basis.
  LpStatus solve_from(const std::vector<int>& basis) {
    if (static_cast<int>(basis.size()) != m_)
      throw std::invalid_argument("SimplexEngine: basis size mismatch");
    basis_ = basis;
    std::fill(in_basis_.begin(), in_basis_.end(), 0);
    for (int j : basis_) in_basis_[j] = 1;
    factorize();
    double scale = 1.0;
    for (double v : b_) scale = std::max(scale, std::fabs(v));
    for (double v : xb_)
      if (v < -1e-7 * scale)
        throw std::invalid_argument("SimplexEngine: starting basis infeasible");
    return primal_loop();
  }

  // Continues from the current basis after columns or costs changed.
  LpStatus reoptimize() {
    if (basis_.empty() && m_ > 0)
      throw std::logic_error("SimplexEngine: reoptimize before solve_from");
    return primal_loop();
  }

  double objective() const {
    double s = 0.0;
    for (int i = 0; i < m_; ++i) s += cost_[basis_[i]] * xb_[i];
    return s;
  }

  std::vector<double> primal() const {
    std::vector<double> x(cols_.size(), 0.0);
    for (int i = 0; i < m_; ++i)
      x[basis_[i]] = xb_[i] > 0.0 ? xb_[i] : 0.0;
    return x;
  }

  std::vector<double> duals() const {
    std::vector<double> y(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const double cb = cost_[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = &binv_[static_cast<std::size_t>(i) * m_];
      for (int j = 0; j < m_; ++j) y[j] += cb * row[j];
    }
    return y;
  }

  const std::vector<int>& basis() const { return basis_; }
  double basic_value(int row) const { return xb_[row]; }

  // Forces the basic variable in `row` out via a degenerate pivot on any
  // column with index below `col_limit`.  Used to expel artificials after
  // phase one; returns false when the tableau row is zero there (the row is
  // redundant and the resident variable is inert from then on).
  bool pivot_out_row(int row, int col_limit) {
    const double* brow = &binv_[static_cast<std::size_t>(row) * m_];
    int enter = -1;
    double best = 1e-7;
    for (int j = 0; j < col_limit && j < num_columns(); ++j) {
      if (in_basis_[j] || banned_[j]) continue;
      double t = 0.0;
      for (int i = 0; i < m_; ++i) t += brow[i] * cols_[j][i];
      if (std::fabs(t) > best) {
        best = std::fabs(t);
        enter = j;
      }
    }
    if (enter < 0) return false;
    apply_pivot(enter, row, ftran(cols_[enter]));
    return true;
  }

 private:
  static constexpr double kEnterTol = 1e-9;
  static constexpr double kPivotTol = 1e-10;
  static constexpr int kRefactorEvery = 128;
  static constexpr int kStallLimit = 500;

  int m_ = 0;
  std::vector<double> b_;
  std::vector<std::vector<double>> cols_;
  std::vector<double> cost_;
  std::vector<char> banned_;
  std::vector<char> in_basis_;
  std::vector<int> basis_;
  std::vector<double> binv_;  // m_ x m_, row-major
  std::vector<double> xb_;
  long iters_ = 0;
  int pivots_since_refactor_ = 0;

  // Rebuilds the basis inverse from scratch by Gauss-Jordan elimination.
  void factorize() {
    const int w = 2 * m_;
    std::vector<double> aug(static_cast<std::size_t>(m_) * w, 0.0);
    for (int k = 0; k < m_; ++k) {
      const std::vector<double>& col = cols_[basis_[k]];
      for (int i = 0; i < m_; ++i) aug[static_cast<std::size_t>(i) * w + k] = col[i];
    }
    for (int i = 0; i < m_; ++i) aug[static_cast<std::size_t>(i) * w + m_ + i] = 1.0;
    for (int k = 0; k < m_; ++k) {
      int piv = k;
      for (int i = k + 1; i < m_; ++i)
        if (std::fabs(aug[static_cast<std::size_t>(i) * w + k]) >
            std::fabs(aug[static_cast<std::size_t>(piv) * w + k]))
          piv = i;
      const double head = aug[static_cast<std::size_t>(piv) * w + k];
      if (std::fabs(head) < 1e-12)
        throw std::runtime_error("SimplexEngine: singular basis");
      if (piv != k)
        for (int j = 0; j < w; ++j)
          std::swap(aug[static_cast<std::size_t>(piv) * w + j],
                    aug[static_cast<std::size_t>(k) * w + j]);
      const double inv = 1.0 / aug[static_cast<std::size_t>(k) * w + k];
      for (int j = 0; j < w; ++j) aug[static_cast<std::size_t>(k) * w + j] *= inv;
      for (int i = 0; i < m_; ++i) {
        if (i == k) continue;
        const double f = aug[static_cast<std::size_t>(i) * w + k];
        if (f == 0.0) continue;
        for (int j = 0; j < w; ++j)
          aug[static_cast<std::size_t>(i) * w + j] -=
              f * aug[static_cast<std::size_t>(k) * w + j];
      }
    }
    binv_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < m_; ++j)
        binv_[static_cast<std::size_t>(i) * m_ + j] =
            aug[static_cast<std::size_t>(i) * w + m_ + j];
    refresh_basics();
    pivots_since_refactor_ = 0;
  }

  void refresh_basics() {
    xb_.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const double* row = &binv_[static_cast<std::size_t>(i) * m_];
      double s = 0.0;
      for (int j = 0; j < m_; ++j) s += row[j] * b_[j];
      xb_[i] = s;
    }
  }

  std::vector<double> ftran(const std::vector<double>& col) const {
    std::vector<double> w(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const double* row = &binv_[static_cast<std::size_t>(i) * m_];
      double s = 0.0;
      for (int j = 0; j < m_; ++j) s += row[j] * col[j];
      w[i] = s;
    }
    return w;
  }

  void apply_pivot(int enter, int leave_row, const std::vector<double>& w) {
    const double theta = w[leave_row] != 0.0 ? xb_[leave_row] / w[leave_row] : 0.0;
    const double inv = 1.0 / w[leave_row];
    double* prow = &binv_[static_cast<std::size_t>(leave_row) * m_];
    for (int j = 0; j < m_; ++j) prow[j] *= inv;
    for (int i = 0; i < m_; ++i) {
      if (i == leave_row) continue;
      const double f = w[i];
      if (f == 0.0) continue;
      double* row = &binv_[static_cast<std::size_t>(i) * m_];
      for (int j = 0; j < m_; ++j) row[j] -= f * prow[j];
      xb_[i] -= theta * f;
      if (xb_[i] < 0.0 && xb_[i] > -1e-11) xb_[i] = 0.0;
    }
    xb_[leave_row] = theta;
    in_basis_[basis_[leave_row]] = 0;
    basis_[leave_row] = enter;
    in_basis_[enter] = 1;
    if (++pivots_since_refactor_ >= kRefactorEvery) factorize();
  }

  LpStatus primal_loop() {
    const long limit = 10000 + 10L * (m_ + num_columns());
    long taken = 0;
    bool bland = false;
    int stall = 0;
    double last_obj = objective();
    while (true) {
      ++iters_;
      if (++taken > limit)
        throw std::runtime_error("SimplexEngine: iteration limit");
      const std::vector<double> y = duals();
      int enter = -1;
      double most_negative = -kEnterTol;
      for (int j = 0; j < num_columns(); ++j) {
        if (in_basis_[j] || banned_[j]) continue;
        double d = cost_[j];
        const std::vector<double>& col = cols_[j];
        for (int i = 0; i < m_; ++i) d -= y[i] * col[i];
        if (d < most_negative) {
          most_negative = d;
          enter = j;
          if (bland) break;  // first eligible index suffices
        }
      }
      if (enter < 0) {
        if (pivots_since_refactor_ > 0) factorize();
        return LpStatus::Optimal;
      }

      const std::vector<double> w = ftran(cols_[enter]);
      double theta = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i)
        if (w[i] > kPivotTol) theta = std::min(theta, xb_[i] / w[i]);
      if (!std::isfinite(theta)) return LpStatus::Unbounded;

      // Among rows hitting the minimum ratio, prefer expelling banned
      // residents, then (Bland mode) the smallest variable index for
      // anti-cycling, otherwise the largest pivot for stability.
      int leave = -1;
      const double cap = theta + 1e-9 * (1.0 + theta);
      for (int i = 0; i < m_; ++i) {
        if (w[i] <= kPivotTol || xb_[i] / w[i] > cap) continue;
        if (leave < 0) {
          leave = i;
          continue;
        }
        const bool cand_banned = banned_[basis_[i]] != 0;
        const bool best_banned = banned_[basis_[leave]] != 0;
        if (cand_banned != best_banned) {
          if (cand_banned) leave = i;
        } else if (bland) {
          if (basis_[i] < basis_[leave]) leave = i;
        } else if (w[i] > w[leave]) {
          leave = i;
        }
      }
      apply_pivot(enter, leave, w);

      const double obj = objective();
      if (obj < last_obj - 1e-13 * (1.0 + std::fabs(last_obj))) {
        stall = 0;
        bland = false;
      } else if (++stall > kStallLimit) {
        bland = true;
      }
      last_obj = obj;
    }
  }
};

// Two-phase solve of the inequality-form program.  Phase one minimizes the
// sum of artificials from the all-artificial basis; leftover artificials are
// pivoted out where possible and otherwise sit inert on redundant rows.
inline LpSolution solve_lp(const LpProblem& p) {
  const int m = p.rows, n = p.cols;
  if (m < 0 || n < 0 ||
      static_cast<int>(p.a.size()) != m * n ||
      static_cast<int>(p.b.size()) != m || static_cast<int>(p.c.size()) != n)
    throw std::invalid_argument("solve_lp: inconsistent dimensions");

  LpSolution sol;
  if (m == 0) {
    for (double cj : p.c)
      if (cj < 0.0) {
        sol.status = LpStatus::Unbounded;
        sol.objective = -std::numeric_limits<double>::infinity();
        return sol;
      }
    sol.status = LpStatus::Optimal;
    sol.objective = 0.0;
    sol.x.assign(n, 0.0);
    return sol;
  }
  if (n == 0) {
    for (double bi : p.b)
      if (bi > 1e-9) {
        sol.status = LpStatus::Infeasible;
        sol.objective = std::numeric_limits<double>::infinity();
        return sol;
      }
    sol.status = LpStatus::Optimal;
    sol.objective = 0.0;
    sol.duals.assign(m, 0.0);
    return sol;
  }

  // Equality form with nonnegative right-hand side: rows with b < 0 are
  // negated (their duals must be negated back on output).
  std::vector<double> sign(m, 1.0), beq(m);
  double bscale = 1.0;
  for (int i = 0; i < m; ++i) {
    sign[i] = p.b[i] < 0.0 ? -1.0 : 1.0;
    beq[i] = sign[i] * p.b[i];
    bscale = std::max(bscale, beq[i]);
  }

  SimplexEngine eng(beq);
  std::vector<double> col(m);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) col[i] = sign[i] * p.at(i, j);
    eng.add_column(col, 0.0);
  }
  for (int i = 0; i < m; ++i) {  // surplus
    std::fill(col.begin(), col.end(), 0.0);
    col[i] = -sign[i];
    eng.add_column(col, 0.0);
  }
  std::vector<int> art_basis(m);
  for (int i = 0; i < m; ++i) {  // artificials
    std::fill(col.begin(), col.end(), 0.0);
    col[i] = 1.0;
    art_basis[i] = eng.add_column(col, 1.0);
  }

  if (eng.solve_from(art_basis) != LpStatus::Optimal)
    throw std::runtime_error("solve_lp: phase one did not terminate");
  if (eng.objective() > 1e-8 * bscale) {
    sol.status = LpStatus::Infeasible;
    sol.objective = std::numeric_limits<double>::infinity();
    return sol;
  }
  for (int i = 0; i < m; ++i)
    if (eng.basis()[i] >= n + m) eng.pivot_out_row(i, n + m);
  for (int j = 0; j < n; ++j) eng.set_cost(j, p.c[j]);
  for (int j = 0; j < m; ++j) {
    eng.set_cost(n + m + j, 0.0);
    eng.ban(n + m + j);
  }

  const LpStatus st = eng.reoptimize();
  if (st == LpStatus::Unbounded) {
    sol.status = LpStatus::Unbounded;
    sol.objective = -std::numeric_limits<double>::infinity();
    return sol;
  }
  sol.status = LpStatus::Optimal;
  sol.objective = eng.objective();
  const std::vector<double> z = eng.primal();
  sol.x.assign(z.begin(), z.begin() + n);
  const std::vector<double> y = eng.duals();
  sol.duals.resize(m);
  for (int i = 0; i < m; ++i) sol.duals[i] = sign[i] * y[i];
  return sol;
}

}  // namespace tbs
