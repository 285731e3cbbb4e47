#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tbscreen/lp.hpp"
#include "tbscreen/mdp.hpp"

namespace tbs {

// ---------------------------------------------------------------------------
// Exact planning by successive approximation.
// ---------------------------------------------------------------------------

struct ViOptions {
  double tol = 1e-10;       // sup-norm residual at which to stop
  long max_sweeps = 200000;
  double tie_tol = 1e-9;    // greedy tie band, relative to the value scale
};

struct ViResult {
  std::vector<double> value;
  std::vector<int> greedy;
  long sweeps = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
};

template <class M>
std::vector<double> q_values(const M& m, const std::vector<double>& v,
                             double discount, int s) {
  std::vector<double> q(m.num_actions());
  for (int a = 0; a < m.num_actions(); ++a) {
    double e = 0.0;
    for (const auto& [j, p] : m.successors(s, a)) e += p * v[j];
    q[a] = m.cost(s, a) + discount * e;
  }
  return q;
}

// First action within the tie band of the minimum, in declaration order, so
// selections are stable under float noise.
inline int pick_within_band(const std::vector<double>& q, double tie_tol) {
  double best = q[0];
  for (double v : q) best = std::min(best, v);
  const double band = best + tie_tol * (1.0 + std::fabs(best));
  for (std::size_t a = 0; a < q.size(); ++a)
    if (q[a] <= band) return static_cast<int>(a);
  return 0;
}

template <class M>
std::vector<int> greedy_actions(const M& m, const std::vector<double>& v,
                                double discount, double tie_tol = 1e-9) {
  std::vector<int> g(m.num_states());
  for (int s = 0; s < m.num_states(); ++s)
    g[s] = pick_within_band(q_values(m, v, discount, s), tie_tol);
  return g;
}

template <class M>
std::vector<double> bellman_backup(const M& m, const std::vector<double>& v,
                                   double discount) {
  std::vector<double> out(m.num_states());
  for (int s = 0; s < m.num_states(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < m.num_actions(); ++a) {
      double e = 0.0;
      for (const auto& [j, p] : m.successors(s, a)) e += p * v[j];
      best = std::min(best, m.cost(s, a) + discount * e);
    }
    out[s] = best;
  }
  return out;
}

template <class M>
ViResult value_iteration(const M& m, double discount, ViOptions opt = {}) {
  ViResult r;
  r.value.assign(m.num_states(), 0.0);
  while (r.sweeps < opt.max_sweeps) {
    std::vector<double> next = bellman_backup(m, r.value, discount);
    double res = 0.0;
    for (int s = 0; s < m.num_states(); ++s)
      res = std::max(res, std::fabs(next[s] - r.value[s]));
    r.value.swap(next);
    ++r.sweeps;
    r.residual = res;
    if (res <= opt.tol) {
      r.converged = true;
      break;
    }
  }
  r.greedy = greedy_actions(m, r.value, discount, opt.tie_tol);
  return r;
}

namespace detail {

// Averages the value over the independent arrival coordinate; backups then
// only need the (ongoing, undetected) rows.
inline void arrival_average(const GroupMdp& m, const std::vector<double>& v,
                            std::vector<double>& w) {
  const int nx = m.max_new() + 1, ny = m.max_ongoing() + 1,
            nu = m.max_undetected() + 1;
  w.assign(static_cast<std::size_t>(ny) * nu, 0.0);
  for (int x = 0; x < nx; ++x) {
    const double px = m.arrival().mass[x];
    const double* slab = &v[static_cast<std::size_t>(x) * ny * nu];
    for (int k = 0; k < ny * nu; ++k) w[k] += px * slab[k];
  }
}

inline double factored_q(const GroupMdp& m, const std::vector<double>& w,
                         double discount, int s, int a, int nu) {
  double e = 0.0;
  for (const YuCell& c : m.yu_row(s, a))
    e += c.p * w[static_cast<std::size_t>(c.y) * nu + c.u];
  return m.cost(s, a) + discount * e;
}

}  // namespace detail

inline std::vector<int> greedy_actions(const GroupMdp& m,
                                       const std::vector<double>& v,
                                       double discount, double tie_tol = 1e-9) {
  const int nu = m.max_undetected() + 1;
  std::vector<double> w;
  detail::arrival_average(m, v, w);
  std::vector<int> g(m.num_states());
  std::vector<double> q(m.num_actions());
  for (int s = 0; s < m.num_states(); ++s) {
    for (int a = 0; a < m.num_actions(); ++a)
      q[a] = detail::factored_q(m, w, discount, s, a, nu);
    g[s] = pick_within_band(q, tie_tol);
  }
  return g;
}

inline ViResult value_iteration(const GroupMdp& m, double discount,
                                ViOptions opt = {}) {
  const int S = m.num_states(), A = m.num_actions();
  const int nu = m.max_undetected() + 1;
  ViResult r;
  r.value.assign(S, 0.0);
  std::vector<double> next(S), w;
  while (r.sweeps < opt.max_sweeps) {
    detail::arrival_average(m, r.value, w);
    double res = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a)
        best = std::min(best, detail::factored_q(m, w, discount, s, a, nu));
      next[s] = best;
      res = std::max(res, std::fabs(best - r.value[s]));
    }
    r.value.swap(next);
    ++r.sweeps;
    r.residual = res;
    if (res <= opt.tol) {
      r.converged = true;
      break;
    }
  }
  r.greedy = greedy_actions(m, r.value, discount, opt.tie_tol);
  return r;
}

// ---------------------------------------------------------------------------
// Deterministic stationary policy on the bounded grid.
// ---------------------------------------------------------------------------

// Lookups clamp to the grid so simulation may query states that drift past
// the planning bounds.
class Policy {
 public:
  Policy() = default;
  Policy(int mx, int my, int mu, std::vector<int> actions)
      : mx_(mx), my_(my), mu_(mu), actions_(std::move(actions)) {
    const std::size_t want = static_cast<std::size_t>(mx_ + 1) * (my_ + 1) * (mu_ + 1);
    if (actions_.size() != want)
      throw std::invalid_argument("Policy: action table size mismatch");
    for (int a : actions_)
      if (a < 0 || a >= static_cast<int>(all_actions().size()))
        throw std::invalid_argument("Policy: action index out of range");
  }

  const Action& at(const GroupState& s) const {
    const int x = std::clamp(s.new_arrivals, 0, mx_);
    const int y = std::clamp(s.ongoing, 0, my_);
    const int u = std::clamp(s.undetected, 0, mu_);
    return all_actions()[actions_[(static_cast<std::size_t>(x) * (my_ + 1) + y) *
                                      (mu_ + 1) +
                                  u]];
  }
  int action_index(int state_idx) const { return actions_[state_idx]; }
  int max_new() const { return mx_; }
  int max_ongoing() const { return my_; }
  int max_undetected() const { return mu_; }
  int num_states() const { return static_cast<int>(actions_.size()); }
  const std::vector<int>& actions() const { return actions_; }

 private:
  int mx_ = -1, my_ = -1, mu_ = -1;
  std::vector<int> actions_;
};

inline Policy make_policy(const GroupMdp& m, const std::vector<int>& greedy) {
  return Policy(m.max_new(), m.max_ongoing(), m.max_undetected(), greedy);
}

// ---------------------------------------------------------------------------
// Restricted master and column generation.
// ---------------------------------------------------------------------------

struct Column {
  int state = 0;
  int action = 0;
};

struct PricedColumn {
  Column col;
  double reduced_cost = 0.0;
};

// Constraint column e_s - discount * P(.|s,a) of the occupancy program
//   min c.delta  s.t.  (E - discount * P^T) delta >= gamma, delta >= 0.
template <class M>
std::vector<double> master_column(const M& m, const Column& c, double discount) {
  std::vector<double> col(m.num_states(), 0.0);
  col[c.state] += 1.0;
  for (const auto& [j, p] : m.successors(c.state, c.action))
    col[j] -= discount * p;
  return col;
}

struct MasterResult {
  LpStatus status = LpStatus::Infeasible;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> duals;    // per state; the value estimate
  std::vector<double> weights;  // per supplied column
};

// One-shot solve over a fixed column set; may be infeasible when the columns
// cannot cover the weighted states.
template <class M>
MasterResult restricted_master(const M& m, const std::vector<Column>& cols,
                               const std::vector<double>& gamma,
                               double discount) {
  const int S = m.num_states(), C = static_cast<int>(cols.size());
  if (static_cast<int>(gamma.size()) != S)
    throw std::invalid_argument("restricted_master: gamma size mismatch");
  LpProblem p;
  p.rows = S;
  p.cols = C;
  p.a.assign(static_cast<std::size_t>(S) * C, 0.0);
  p.b = gamma;
  p.c.resize(C);
  for (int j = 0; j < C; ++j) {
    const std::vector<double> col = master_column(m, cols[j], discount);
    for (int i = 0; i < S; ++i) p.at(i, j) = col[i];
    p.c[j] = m.cost(cols[j].state, cols[j].action);
  }
  const LpSolution sol = solve_lp(p);
  MasterResult r;
  r.status = sol.status;
  r.objective = sol.objective;
  r.duals = sol.duals;
  r.weights = sol.x;
  return r;
}

// Warm-started master: seeded with one column per state so the seed columns
// form a feasible basis (their matrix is I - discount * P^T, whose inverse is
// nonnegative), added columns resume from the previous optimal basis.
template <class M>
class RestrictedMaster {
 public:
  RestrictedMaster(const M& m, std::vector<double> gamma, double discount,
                   int seed_action = 1)
      : mdp_(m), discount_(discount), eng_(std::move(gamma)) {
    const int S = m.num_states();
    if (eng_.rows() != S)
      throw std::invalid_argument("RestrictedMaster: gamma size mismatch");
    if (seed_action < 0 || seed_action >= m.num_actions())
      throw std::invalid_argument("RestrictedMaster: bad seed action");
    seed_basis_.resize(S);
    for (int s = 0; s < S; ++s) {
      const Column c{s, seed_action};
      seed_basis_[s] =
          eng_.add_column(master_column(m, c, discount_), m.cost(s, seed_action));
      cols_.push_back(c);
      have_.insert({s, seed_action});
    }
    std::vector<double> surplus(S, 0.0);
    for (int i = 0; i < S; ++i) {
      surplus[i] = -1.0;
      eng_.add_column(surplus, 0.0);
      surplus[i] = 0.0;
      cols_.push_back({-1, -1});
    }
  }

  bool add(const Column& c) {
    if (!have_.insert({c.state, c.action}).second) return false;
    eng_.add_column(master_column(mdp_, c, discount_),
                    mdp_.cost(c.state, c.action));
    cols_.push_back(c);
    return true;
  }

  void solve() {
    const LpStatus st =
        solved_ ? eng_.reoptimize() : eng_.solve_from(seed_basis_);
    if (st != LpStatus::Optimal)
      throw std::runtime_error("RestrictedMaster: master not optimal");
    solved_ = true;
  }

  double objective() const { return eng_.objective(); }
  std::vector<double> duals() const { return eng_.duals(); }
  long pivots() const { return eng_.iterations(); }
  int num_columns() const { return static_cast<int>(have_.size()); }

  // Columns carrying positive weight in the current solution.
  std::vector<std::pair<Column, double>> support() const {
    std::vector<std::pair<Column, double>> out;
    const std::vector<double> x = eng_.primal();
    for (std::size_t j = 0; j < cols_.size(); ++j)
      if (cols_[j].state >= 0 && x[j] > 1e-12) out.push_back({cols_[j], x[j]});
    return out;
  }

 private:
  const M& mdp_;
  double discount_;
  SimplexEngine eng_;
  std::vector<Column> cols_;  // engine index -> column; {-1,-1} for surplus
  std::set<std::pair<int, int>> have_;
  std::vector<int> seed_basis_;
  bool solved_ = false;
};

// Reduced cost of a candidate column under the current duals:
//   f(s, a) = c(s, a) - v(s) + discount * sum_j P(j|s,a) v(j).
// Returns every pair below -tol, most negative first (ties by state then
// action); at most k entries when k > 0.
template <class M>
std::vector<PricedColumn> price_columns(const M& m,
                                        const std::vector<double>& duals,
                                        double discount, double tol, int k) {
  std::vector<PricedColumn> out;
  for (int s = 0; s < m.num_states(); ++s)
    for (int a = 0; a < m.num_actions(); ++a) {
      double f = m.cost(s, a) - duals[s];
      for (const auto& [j, p] : m.successors(s, a)) f += discount * p * duals[j];
      if (f < -tol) out.push_back({{s, a}, f});
    }
  std::sort(out.begin(), out.end(), [](const PricedColumn& x, const PricedColumn& y) {
    if (x.reduced_cost != y.reduced_cost) return x.reduced_cost < y.reduced_cost;
    if (x.col.state != y.col.state) return x.col.state < y.col.state;
    return x.col.action < y.col.action;
  });
  if (k > 0 && static_cast<int>(out.size()) > k) out.resize(k);
  return out;
}

inline std::vector<PricedColumn> price_columns(const GroupMdp& m,
                                               const std::vector<double>& duals,
                                               double discount, double tol,
                                               int k) {
  const int nu = m.max_undetected() + 1;
  std::vector<double> w;
  detail::arrival_average(m, duals, w);
  std::vector<PricedColumn> out;
  for (int s = 0; s < m.num_states(); ++s)
    for (int a = 0; a < m.num_actions(); ++a) {
      const double f = detail::factored_q(m, w, discount, s, a, nu) - duals[s];
      if (f < -tol) out.push_back({{s, a}, f});
    }
  std::sort(out.begin(), out.end(), [](const PricedColumn& x, const PricedColumn& y) {
    if (x.reduced_cost != y.reduced_cost) return x.reduced_cost < y.reduced_cost;
    if (x.col.state != y.col.state) return x.col.state < y.col.state;
    return x.col.action < y.col.action;
  });
  if (k > 0 && static_cast<int>(out.size()) > k) out.resize(k);
  return out;
}

struct CgOptions {
  double tol = 1e-9;     // pricing threshold; certification is limited below
                         // by the simplex reduced-cost tolerance
  int max_rounds = 10000;
  int per_round = 16;    // columns admitted per pricing round
  int seed_action = 1;
  double tie_tol = 1e-9;
};

struct CgResult {
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> value;  // master duals at termination
  std::vector<int> greedy;
  int rounds = 0;
  int columns = 0;
  long pivots = 0;
  bool converged = false;
};

template <class M>
CgResult column_generation(const M& m, const std::vector<double>& gamma,
                           double discount, CgOptions opt = {}) {
  RestrictedMaster<M> master(m, gamma, discount, opt.seed_action);
  CgResult r;
  while (r.rounds < opt.max_rounds) {
    master.solve();
    ++r.rounds;
    const std::vector<double> duals = master.duals();
    const std::vector<PricedColumn> priced =
        price_columns(m, duals, discount, opt.tol, opt.per_round);
    if (priced.empty()) {
      r.converged = true;
      break;
    }
    int added = 0;
    for (const PricedColumn& pc : priced) added += master.add(pc.col) ? 1 : 0;
    if (added == 0) {
      r.converged = true;  // only duplicates priced: at the engine tolerance
      break;
    }
  }
  r.value = master.duals();
  r.objective = master.objective();
  r.greedy = greedy_actions(m, r.value, discount, opt.tie_tol);
  r.columns = master.num_columns();
  r.pivots = master.pivots();
  return r;
}

}  // namespace tbs
