#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "tbscreen/clinic.hpp"
#include "tbscreen/dist.hpp"
#include "tbscreen/model.hpp"

// Per-group yearly screening process: exact successor distributions and
// closed-form expected stage costs over the bounded state grid.
//
// Within a year, in order: a Binomial(y, p_leave) draw of leavers; every
// remaining employee is independently infected with probability alpha; tested
// infected slip through with the test's false-negative rate (new hires take
// the skin protocol twice, so they slip only if both readings miss); every
// employee infected this year leaves the ongoing count, and the undetected
// ones are carried for exactly one year in the undetected coordinate.  Next
// year's hires are truncated-Poisson and independent of everything else.

namespace tbs {

// Probability one susceptible employee is infected this year: exposure to the
// group's own undetected carriers plus ambient community exposure.  Cross-
// group terms vanish under the identity contact assumption.
inline double infection_probability(const GroupState& s, const GroupParams& gp,
                                    double beta) {
  double alpha = beta * gp.patient_contact * gp.transmissibility;
  const int present = s.new_arrivals + s.ongoing;
  if (present > 0)
    alpha += gp.transmissibility * static_cast<double>(s.undetected) / present;
  return alpha < 0.0 ? 0.0 : (alpha > 1.0 ? 1.0 : alpha);
}

struct TestedCounts {
  int skin_new = 0;
  int skin_ongoing = 0;
  int blood = 0;
  int untested = 0;
};

inline TestedCounts tested_counts(const GroupState& s, const Action& a,
                                  int leavers) {
  const int stay = s.ongoing - leavers;
  TestedCounts c;
  if (a.new_test == TestKind::Skin)
    c.skin_new = s.new_arrivals;
  else
    c.blood += s.new_arrivals;
  switch (a.ongoing_test) {
    case OngoingTest::None: c.untested = stay; break;
    case OngoingTest::Skin: c.skin_ongoing = stay; break;
    case OngoingTest::Blood: c.blood += stay; break;
  }
  return c;
}

// The six decisions in tie-break preference order: no ongoing test before
// skin before blood, and skin before blood for new hires.
inline const std::vector<Action>& all_actions() {
  static const std::vector<Action> acts = {
      {TestKind::Skin, OngoingTest::None},  {TestKind::Blood, OngoingTest::None},
      {TestKind::Skin, OngoingTest::Skin},  {TestKind::Blood, OngoingTest::Skin},
      {TestKind::Skin, OngoingTest::Blood}, {TestKind::Blood, OngoingTest::Blood},
  };
  return acts;
}

// Joint law over successor (ongoing, undetected) cells.
struct YuCell {
  int y = 0;
  int u = 0;
  double p = 0.0;
};

struct TransitionDist {
  // Sorted by state, ascending; probabilities sum to one within 1e-9.
  std::vector<std::pair<GroupState, double>> mass;

  double prob(const GroupState& s) const {
    auto it = std::lower_bound(
        mass.begin(), mass.end(), s,
        [](const auto& entry, const GroupState& key) { return entry.first < key; });
    if (it == mass.end() || !(it->first == s)) return 0.0;
    return it->second;
  }
};

namespace detail {

// Read from an (undetected, removed) table.  Unlike trinomial category
// counts, the coordinates are not co-bounded: all n trials infected and
// missed lands on (n, n), so JointCounts::p() with its a + b <= n guard
// would silently drop valid cells.
inline double ur_cell(const JointCounts& t, int a, int b) {
  if (a < 0 || b < 0 || a > t.n || b > t.n) return 0.0;
  return t.cells[static_cast<std::size_t>(a) * (t.n + 1) + b];
}

// Law of (undetected, removed) for one tested stream: per-trial categories
// are miss (infected, undetected) and catch (infected, detected); both count
// as removed from the ongoing population.
inline JointCounts tested_stream(int n, double alpha, double fn) {
  JointCounts split = split3(n, alpha * fn, alpha * (1.0 - fn));
  JointCounts out;
  out.n = n;
  out.cells.assign(static_cast<std::size_t>(n + 1) * (n + 1), 0.0);
  for (int a = 0; a <= n; ++a)
    for (int b = 0; a + b <= n; ++b) {
      const double p = split.p(a, b);
      if (p != 0.0) out.at(a, a + b) += p;
    }
  return out;
}

// Untested stream: every infection goes undetected and is removed.
inline JointCounts untested_stream(int n, double alpha) {
  const ProbVec inf = binomial(n, alpha);
  JointCounts out;
  out.n = n;
  out.cells.assign(static_cast<std::size_t>(n + 1) * (n + 1), 0.0);
  for (int k = 0; k <= n; ++k) out.at(k, k) = inf.mass[k];
  return out;
}

inline JointCounts conv2(const JointCounts& f, const JointCounts& g) {
  JointCounts out;
  out.n = f.n + g.n;
  out.cells.assign(static_cast<std::size_t>(out.n + 1) * (out.n + 1), 0.0);
  for (int a1 = 0; a1 <= f.n; ++a1)
    for (int r1 = a1; r1 <= f.n; ++r1) {
      const double p1 = ur_cell(f, a1, r1);
      if (p1 == 0.0) continue;
      for (int a2 = 0; a2 <= g.n; ++a2)
        for (int r2 = a2; r2 <= g.n; ++r2) {
          const double p2 = ur_cell(g, a2, r2);
          if (p2 != 0.0) out.at(a1 + a2, r1 + r2) += p1 * p2;
        }
    }
  return out;
}

}  // namespace detail

// Exact joint law of next year's (ongoing, undetected), with excess mass
// clamped onto the bounds.  Entries below 1e-15 are pruned and the row
// renormalized.
inline std::vector<YuCell> transition_yu(const GroupState& s, const Action& a,
                                         const GroupParams& gp, double beta) {
  const double alpha = infection_probability(s, gp, beta);
  const double fn_new =
      a.new_test == TestKind::Skin ? gp.skin_fn * gp.skin_fn : gp.blood_fn;
  const double fn_ong =
      a.ongoing_test == OngoingTest::Skin ? gp.skin_fn : gp.blood_fn;

  const JointCounts new_stream =
      detail::tested_stream(s.new_arrivals, alpha, fn_new);
  const ProbVec leav = binomial(s.ongoing, gp.leave_prob);

  std::vector<double> grid(
      static_cast<std::size_t>(gp.max_ongoing + 1) * (gp.max_undetected + 1), 0.0);
  auto bump = [&](int y, int u, double p) {
    grid[static_cast<std::size_t>(y) * (gp.max_undetected + 1) + u] += p;
  };

  for (int l = 0; l <= s.ongoing; ++l) {
    const double pl = leav.mass[l];
    if (pl < 1e-15) continue;
    const int stay = s.ongoing - l;
    const JointCounts ong = a.ongoing_test == OngoingTest::None
                                ? detail::untested_stream(stay, alpha)
                                : detail::tested_stream(stay, alpha, fn_ong);
    const JointCounts both = detail::conv2(new_stream, ong);
    for (int du = 0; du <= both.n; ++du)
      for (int r = du; r <= both.n; ++r) {
        const double p = detail::ur_cell(both, du, r);
        if (p == 0.0) continue;
        const int y2 = std::min(s.new_arrivals + stay - r, gp.max_ongoing);
        const int u2 = std::min(du, gp.max_undetected);
        bump(y2 < 0 ? 0 : y2, u2, pl * p);
      }
  }

  // Prune dust and renormalize what survives.
  double kept = 0.0;
  for (double& g : grid) {
    if (g < 1e-15) g = 0.0;
    kept += g;
  }
  std::vector<YuCell> row;
  for (int y = 0; y <= gp.max_ongoing; ++y)
    for (int u = 0; u <= gp.max_undetected; ++u) {
      const double p = grid[static_cast<std::size_t>(y) * (gp.max_undetected + 1) + u];
      if (p != 0.0) row.push_back({y, u, p / kept});
    }
  return row;
}

// Full successor law including next year's truncated-Poisson arrivals.
inline TransitionDist transition_distribution(const GroupState& s, const Action& a,
                                              const GroupParams& gp, double beta) {
  const std::vector<YuCell> yu = transition_yu(s, a, gp, beta);
  const ProbVec arrivals = truncated_poisson(gp.arrival_rate, gp.max_new);
  TransitionDist t;
  t.mass.reserve(yu.size() * arrivals.mass.size());
  for (int x = 0; x <= gp.max_new; ++x) {
    const double px = arrivals.mass[x];
    if (px == 0.0) continue;
    for (const YuCell& c : yu)
      t.mass.push_back({GroupState{x, c.y, c.u}, px * c.p});
  }
  std::sort(t.mass.begin(), t.mass.end(),
            [](const auto& a_, const auto& b_) { return a_.first < b_.first; });
  return t;
}

// Expected one-year cost of (state, action), exact in closed form: testing
// fees, X-ray follow-ups for true and false positives, the undetected-
// infection charge, and lost work hours priced at the group's rate.
inline double expected_stage_cost(const GroupState& s, const Action& a, GroupId id,
                                  const SystemParams& sys, const ClinicModel& cm) {
  const GroupParams& gp = sys.groups.at(id);
  const double alpha = infection_probability(s, gp, sys.beta);
  const double stay_e = s.ongoing * (1.0 - gp.leave_prob);
  const double x = s.new_arrivals;

  const bool new_skin = a.new_test == TestKind::Skin;
  // New hires run the two-reading skin protocol: both must miss an infection,
  // and an uninfected employee has two chances to flag false.
  const double fn_new = new_skin ? gp.skin_fn * gp.skin_fn : gp.blood_fn;
  const double fp_new =
      new_skin ? 1.0 - (1.0 - gp.skin_fp) * (1.0 - gp.skin_fp) : gp.blood_fp;

  double skin_tests = new_skin ? x : 0.0;
  double blood_tests = new_skin ? 0.0 : x;
  double xrays = x * (alpha * (1.0 - fn_new) + (1.0 - alpha) * fp_new);
  double undetected = x * alpha * fn_new;
  double hours = x * cm.tested_hours(id, a.new_test, true);

  switch (a.ongoing_test) {
    case OngoingTest::None:
      undetected += stay_e * alpha;
      break;
    case OngoingTest::Skin:
      skin_tests += stay_e;
      xrays += stay_e * (alpha * (1.0 - gp.skin_fn) + (1.0 - alpha) * gp.skin_fp);
      undetected += stay_e * alpha * gp.skin_fn;
      hours += stay_e * cm.tested_hours(id, TestKind::Skin, false);
      break;
    case OngoingTest::Blood:
      blood_tests += stay_e;
      xrays += stay_e * (alpha * (1.0 - gp.blood_fn) + (1.0 - alpha) * gp.blood_fp);
      undetected += stay_e * alpha * gp.blood_fn;
      hours += stay_e * cm.tested_hours(id, TestKind::Blood, false);
      break;
  }
  hours += xrays * cm.xray_hours;

  double skin_billed = skin_tests;
  if (sys.double_charge_new_skin && new_skin) skin_billed += x;

  return sys.cost_blood * blood_tests + sys.cost_skin * skin_billed +
         sys.cost_xray * xrays + gp.undetected_cost * undetected +
         gp.lost_time_rate * hours;
}

// One group's bounded decision process with every (state, action) cost and
// successor row precomputed.  States are indexed x-major, then ongoing, then
// undetected.
class GroupMdp {
 public:
  GroupMdp(GroupId id, const SystemParams& sys, const ClinicModel& cm)
      : id_(id), gp_(sys.groups.at(id)), beta_(sys.beta) {
    if (gp_.max_new < 0 || gp_.max_ongoing < 0 || gp_.max_undetected < 0)
      throw std::logic_error("GroupMdp: unresolved state bounds");
    mx_ = gp_.max_new;
    my_ = gp_.max_ongoing;
    mu_ = gp_.max_undetected;
    n_states_ = (mx_ + 1) * (my_ + 1) * (mu_ + 1);
    arrival_ = truncated_poisson(gp_.arrival_rate, mx_);

    const auto& acts = all_actions();
    cost_.resize(static_cast<std::size_t>(n_states_) * acts.size());
    yu_rows_.resize(static_cast<std::size_t>(n_states_) * acts.size());
    for (int si = 0; si < n_states_; ++si) {
      const GroupState s = state(si);
      for (std::size_t ai = 0; ai < acts.size(); ++ai) {
        cost_[si * acts.size() + ai] = expected_stage_cost(s, acts[ai], id_, sys, cm);
        yu_rows_[si * acts.size() + ai] = transition_yu(s, acts[ai], gp_, beta_);
      }
    }
  }

  GroupId id() const { return id_; }
  const GroupParams& params() const { return gp_; }
  double beta() const { return beta_; }
  int num_states() const { return n_states_; }
  int num_actions() const { return static_cast<int>(all_actions().size()); }
  int max_new() const { return mx_; }
  int max_ongoing() const { return my_; }
  int max_undetected() const { return mu_; }
  const std::vector<Action>& actions() const { return all_actions(); }

  int index(const GroupState& s) const {
    return (s.new_arrivals * (my_ + 1) + s.ongoing) * (mu_ + 1) + s.undetected;
  }
  GroupState state(int idx) const {
    GroupState s;
    s.undetected = idx % (mu_ + 1);
    idx /= (mu_ + 1);
    s.ongoing = idx % (my_ + 1);
    s.new_arrivals = idx / (my_ + 1);
    return s;
  }

  double cost(int s, std::size_t a) const { return cost_[s * actions().size() + a]; }
  const std::vector<YuCell>& yu_row(int s, std::size_t a) const {
    return yu_rows_[s * actions().size() + a];
  }
  const ProbVec& arrival() const { return arrival_; }

  // Index of successor (x', y', u') given a YuCell and arrival count.
  int successor_index(int x, const YuCell& c) const {
    return (x * (my_ + 1) + c.y) * (mu_ + 1) + c.u;
  }

  // Same law as transition(), keyed by state index and sorted by it.
  std::vector<std::pair<int, double>> successors(int s, std::size_t a) const {
    std::vector<std::pair<int, double>> out;
    const auto& yu = yu_row(s, a);
    out.reserve(yu.size() * arrival_.mass.size());
    for (int x = 0; x <= mx_; ++x) {
      const double px = arrival_.mass[x];
      if (px == 0.0) continue;
      for (const YuCell& c : yu) out.emplace_back(successor_index(x, c), px * c.p);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  TransitionDist transition(int s, std::size_t a) const {
    TransitionDist t;
    const auto& yu = yu_row(s, a);
    t.mass.reserve(yu.size() * arrival_.mass.size());
    for (int x = 0; x <= mx_; ++x) {
      const double px = arrival_.mass[x];
      if (px == 0.0) continue;
      for (const YuCell& c : yu) t.mass.push_back({GroupState{x, c.y, c.u}, px * c.p});
    }
    std::sort(t.mass.begin(), t.mass.end(),
              [](const auto& a_, const auto& b_) { return a_.first < b_.first; });
    return t;
  }

 private:
  GroupId id_;
  GroupParams gp_;
  double beta_;
  int mx_ = 0, my_ = 0, mu_ = 0;
  int n_states_ = 0;
  ProbVec arrival_;
  std::vector<double> cost_;
  std::vector<std::vector<YuCell>> yu_rows_;
};

}  // namespace tbs
