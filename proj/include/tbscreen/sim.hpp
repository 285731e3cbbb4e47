#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tbscreen/clinic.hpp"
#include "tbscreen/mdp.hpp"
#include "tbscreen/model.hpp"
#include "tbscreen/rng.hpp"
#include "tbscreen/solve.hpp"

namespace tbs {

// ---------------------------------------------------------------------------
// Policy specifications for simulation.
// ---------------------------------------------------------------------------

enum class PolicyKind { AnnualSkin, Lookup, Threshold };

struct ThresholdBand {
  double threshold = 0.0;  // undetected share u / (x + y) above which it fires
  TestKind test = TestKind::Blood;
};

// Screening rule for one group: new hires always get new_test; the ongoing
// workforce is tested by the highest band whose edge the current undetected
// share exceeds, else on years divisible by period_years (when nonzero),
// else not at all.
struct ThresholdRule {
  TestKind new_test = TestKind::Blood;
  int period_years = 0;
  TestKind periodic_test = TestKind::Blood;
  std::vector<ThresholdBand> bands;  // ascending thresholds
};

struct PolicySpec {
  PolicyKind kind = PolicyKind::AnnualSkin;
  std::map<GroupId, Policy> lookup;
  std::map<GroupId, ThresholdRule> rules;
};

inline PolicySpec annual_skin_policy() { return {}; }

inline PolicySpec lookup_policy(std::map<GroupId, Policy> table) {
  PolicySpec spec;
  spec.kind = PolicyKind::Lookup;
  spec.lookup = std::move(table);
  return spec;
}

inline PolicySpec threshold_policy(std::map<GroupId, ThresholdRule> rules) {
  PolicySpec spec;
  spec.kind = PolicyKind::Threshold;
  spec.rules = std::move(rules);
  return spec;
}

// Candidate replacement for annual skin testing: blood tests for every new
// hire, with ongoing testing either on a fixed cadence or triggered by the
// undetected share of the workforce.
inline std::map<GroupId, ThresholdRule> proposed_rules() {
  std::map<GroupId, ThresholdRule> rules;
  auto periodic = [](int years) {
    ThresholdRule r;
    r.period_years = years;
    return r;
  };
  auto banded = [](std::vector<ThresholdBand> bands) {
    ThresholdRule r;
    r.bands = std::move(bands);
    return r;
  };
  rules[{1, 1}] = periodic(1);
  rules[{1, 2}] = periodic(1);
  rules[{1, 3}] = periodic(1);
  rules[{2, 1}] = banded({{0.016, TestKind::Blood}});
  rules[{2, 2}] = periodic(3);
  rules[{2, 3}] = periodic(3);
  rules[{3, 1}] = banded({{0.017, TestKind::Blood}});
  rules[{3, 2}] = banded({{0.017, TestKind::Skin}, {0.022, TestKind::Blood}});
  rules[{3, 3}] = periodic(2);
  return rules;
}

inline OngoingTest to_ongoing(TestKind kind) {
  return kind == TestKind::Skin ? OngoingTest::Skin : OngoingTest::Blood;
}

// Resolves the action a policy takes for one group in one simulated year
// (years count from zero at the start of the run).
inline Action policy_action(const PolicySpec& spec, GroupId id,
                            const GroupState& s, int year) {
  switch (spec.kind) {
    case PolicyKind::AnnualSkin:
      return {TestKind::Skin, OngoingTest::Skin};
    case PolicyKind::Lookup:
      return spec.lookup.at(id).at(s);
    case PolicyKind::Threshold:
      break;
  }
  const ThresholdRule& rule = spec.rules.at(id);
  Action a{rule.new_test, OngoingTest::None};
  const int present = s.new_arrivals + s.ongoing;
  const double share = present > 0 ? static_cast<double>(s.undetected) / present : 0.0;
  bool banded = false;
  for (const ThresholdBand& band : rule.bands)
    if (share > band.threshold) {
      a.ongoing_test = to_ongoing(band.test);
      banded = true;
    }
  if (!banded && rule.period_years > 0 && year % rule.period_years == 0)
    a.ongoing_test = to_ongoing(rule.periodic_test);
  return a;
}

// ---------------------------------------------------------------------------
// Monte Carlo evaluation.
// ---------------------------------------------------------------------------

struct SimOptions {
  int years = 20;   // tallied horizon, after burn-in
  int reps = 30;
  int burn_in = 10;
  std::uint64_t seed = 1;
  std::uint64_t clinic_seed = 1;  // waiting-time model; match the planner's
};

struct GroupSummary {
  GroupId id;
  double mean_cost = 0.0;  // per year, averaged over replications
  double cost_half_width = 0.0;
  double infection_rate = 0.0;  // infections per person-year
  double rate_half_width = 0.0;
  double mean_population = 0.0;
  double blood_tests = 0.0;  // yearly means
  double skin_tests = 0.0;
  double xrays = 0.0;
};

struct SimReport {
  double total_cost = 0.0;
  double total_half_width = 0.0;
  double infection_rate = 0.0;
  double rate_half_width = 0.0;
  double alpha_rate = 0.0;  // hazard-weighted alternative estimator
  std::vector<double> rep_costs;  // per-replication yearly averages
  std::vector<GroupSummary> groups;
  int years = 0;
  int reps = 0;
  int burn_in = 0;
  std::uint64_t seed = 0;
};

namespace detail {

// Draws that determine the next state, in a fixed order so substreams stay
// aligned across policies; cost-only draws (false positives) come after and
// never perturb the trajectory.
struct TransitionDraws {
  int x_next = 0;
  int stay = 0;      // ongoing employees who did not leave
  int inf_new = 0;   // infections among new arrivals
  int inf_ong = 0;   // infections among the staying workforce
  int miss_new = 0;  // infected new arrivals the entry test missed
  int miss_ong = 0;  // infected stayers missed (all of them when untested)
  bool tested_ongoing = false;
  double alpha = 0.0;  // infection probability this year
};

inline TransitionDraws draw_transition(Rng& rng, const GroupState& s,
                                       const GroupParams& gp, double beta,
                                       const Action& a) {
  TransitionDraws d;
  d.alpha = infection_probability(s, gp, beta);
  const bool new_skin = a.new_test == TestKind::Skin;
  const double fn_new = new_skin ? gp.skin_fn * gp.skin_fn : gp.blood_fn;

  d.x_next = rng.poisson(gp.arrival_rate);
  const int leavers = rng.binomial(s.ongoing, gp.leave_prob);
  d.stay = s.ongoing - leavers;
  d.inf_new = rng.binomial(s.new_arrivals, d.alpha);
  d.inf_ong = rng.binomial(d.stay, d.alpha);
  d.miss_new = rng.binomial(d.inf_new, fn_new);

  d.miss_ong = d.inf_ong;  // untested: every infection goes unseen
  d.tested_ongoing = a.ongoing_test != OngoingTest::None;
  if (a.ongoing_test == OngoingTest::Skin)
    d.miss_ong = rng.binomial(d.inf_ong, gp.skin_fn);
  else if (a.ongoing_test == OngoingTest::Blood)
    d.miss_ong = rng.binomial(d.inf_ong, gp.blood_fn);
  return d;
}

inline GroupState next_state(const GroupState& s, const TransitionDraws& d) {
  return {d.x_next, s.new_arrivals + d.stay - d.inf_new - d.inf_ong,
          d.miss_new + d.miss_ong};
}

inline void mean_halfwidth(const std::vector<double>& v, double& mean,
                           double& hw) {
  const int n = static_cast<int>(v.size());
  double s = 0.0;
  for (double x : v) s += x;
  mean = n > 0 ? s / n : 0.0;
  if (n < 2) {
    hw = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  hw = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
}

}  // namespace detail

// Samples the yearly dynamics with one substream per (replication, group,
// year), so runs are reproducible and, where states coincide, common random
// numbers align across policies.  The dynamics are unbounded -- only policy
// lookups clamp to their grids.
inline SimReport simulate(const PolicySpec& spec, const SystemParams& sys,
                          const SimOptions& opt) {
  if (opt.years < 1 || opt.reps < 1 || opt.burn_in < 0)
    throw std::invalid_argument("simulate: bad horizon options");
  SystemParams resolved = sys;
  for (auto& [id, gp] : resolved.groups) apply_default_bounds(gp);
  const ClinicModel cm =
      build_clinic_model(resolved, resolved.clinic, opt.clinic_seed);

  std::vector<GroupId> ids;
  for (const auto& [id, gp] : resolved.groups) ids.push_back(id);
  const int G = static_cast<int>(ids.size());
  const int R = opt.reps, Y = opt.years;

  std::vector<double> rep_total(R, 0.0);
  std::vector<std::vector<double>> rep_cost(G, std::vector<double>(R, 0.0));
  std::vector<std::vector<double>> rep_inf(G, std::vector<double>(R, 0.0));
  std::vector<std::vector<double>> rep_pop(G, std::vector<double>(R, 0.0));
  std::vector<double> blood_total(G, 0.0), skin_total(G, 0.0), xray_total(G, 0.0);
  double alpha_weighted = 0.0, person_years = 0.0;

  for (int rep = 0; rep < R; ++rep) {
    std::vector<GroupState> state(G);
    for (int g = 0; g < G; ++g) state[g] = initial_state(resolved, ids[g]);

    for (int year = 0; year < opt.burn_in + Y; ++year) {
      for (int g = 0; g < G; ++g) {
        const GroupId id = ids[g];
        const GroupParams& gp = resolved.groups.at(id);
        const GroupState s = state[g];
        const Action a = policy_action(spec, id, s, year);
        Rng rng(mix_seed(opt.seed, static_cast<std::uint64_t>(rep),
                         static_cast<std::uint64_t>(id.salary) * 256 + id.risk,
                         static_cast<std::uint64_t>(year)));

        const bool new_skin = a.new_test == TestKind::Skin;
        const double fp_new =
            new_skin ? 1.0 - (1.0 - gp.skin_fp) * (1.0 - gp.skin_fp) : gp.blood_fp;

        const detail::TransitionDraws d =
            detail::draw_transition(rng, s, gp, resolved.beta, a);
        const int stay = d.stay;

        double skin_tests = new_skin ? s.new_arrivals : 0.0;
        double blood_tests = new_skin ? 0.0 : s.new_arrivals;
        if (a.ongoing_test == OngoingTest::Skin) skin_tests += stay;
        if (a.ongoing_test == OngoingTest::Blood) blood_tests += stay;

        const int fp_new_count =
            rng.binomial(s.new_arrivals - d.inf_new, fp_new);
        int fp_ong = 0;
        if (d.tested_ongoing) {
          const double fp_kind = a.ongoing_test == OngoingTest::Skin
                                     ? gp.skin_fp
                                     : gp.blood_fp;
          fp_ong = rng.binomial(stay - d.inf_ong, fp_kind);
        }

        const int true_pos = (d.inf_new - d.miss_new) +
                             (d.tested_ongoing ? d.inf_ong - d.miss_ong : 0);
        const int xrays = true_pos + fp_new_count + fp_ong;
        const int u_next = d.miss_new + d.miss_ong;

        double hours = s.new_arrivals * cm.tested_hours(id, a.new_test, true);
        if (d.tested_ongoing)
          hours += stay * cm.tested_hours(id, a.ongoing_test == OngoingTest::Skin
                                                  ? TestKind::Skin
                                                  : TestKind::Blood,
                                          false);
        hours += xrays * cm.xray_hours;

        double skin_billed = skin_tests;
        if (resolved.double_charge_new_skin && new_skin)
          skin_billed += s.new_arrivals;
        const double cost = resolved.cost_blood * blood_tests +
                            resolved.cost_skin * skin_billed +
                            resolved.cost_xray * xrays +
                            gp.undetected_cost * u_next +
                            gp.lost_time_rate * hours;

        if (year >= opt.burn_in) {
          const double pop = s.new_arrivals + s.ongoing;
          rep_total[rep] += cost;
          rep_cost[g][rep] += cost;
          rep_inf[g][rep] += d.inf_new + d.inf_ong;
          rep_pop[g][rep] += pop;
          blood_total[g] += blood_tests;
          skin_total[g] += skin_tests;
          xray_total[g] += xrays;
          alpha_weighted += d.alpha * pop;
          person_years += pop;
        }

        state[g] = detail::next_state(s, d);
      }
    }
  }

  SimReport rep;
  rep.years = Y;
  rep.reps = R;
  rep.burn_in = opt.burn_in;
  rep.seed = opt.seed;

  std::vector<double> totals(R), rates(R);
  for (int r = 0; r < R; ++r) {
    totals[r] = rep_total[r] / Y;
    double inf = 0.0, pop = 0.0;
    for (int g = 0; g < G; ++g) {
      inf += rep_inf[g][r];
      pop += rep_pop[g][r];
    }
    rates[r] = pop > 0.0 ? inf / pop : 0.0;
  }
  detail::mean_halfwidth(totals, rep.total_cost, rep.total_half_width);
  detail::mean_halfwidth(rates, rep.infection_rate, rep.rate_half_width);
  rep.rep_costs = totals;
  rep.alpha_rate = person_years > 0.0 ? alpha_weighted / person_years : 0.0;

  for (int g = 0; g < G; ++g) {
    GroupSummary gs;
    gs.id = ids[g];
    std::vector<double> cost(R), rate(R);
    for (int r = 0; r < R; ++r) {
      cost[r] = rep_cost[g][r] / Y;
      rate[r] = rep_pop[g][r] > 0.0 ? rep_inf[g][r] / rep_pop[g][r] : 0.0;
    }
    detail::mean_halfwidth(cost, gs.mean_cost, gs.cost_half_width);
    detail::mean_halfwidth(rate, gs.infection_rate, gs.rate_half_width);
    double pop = 0.0;
    for (int r = 0; r < R; ++r) pop += rep_pop[g][r];
    gs.mean_population = pop / (static_cast<double>(R) * Y);
    gs.blood_tests = blood_total[g] / (static_cast<double>(R) * Y);
    gs.skin_tests = skin_total[g] / (static_cast<double>(R) * Y);
    gs.xrays = xray_total[g] / (static_cast<double>(R) * Y);
    rep.groups.push_back(gs);
  }
  return rep;
}

// Evaluates several policies under common random numbers (same root seed, so
// substreams align wherever the visited states coincide).
inline std::vector<SimReport> compare(const std::vector<PolicySpec>& specs,
                                      const SystemParams& sys,
                                      const SimOptions& opt) {
  std::vector<SimReport> out;
  out.reserve(specs.size());
  for (const PolicySpec& spec : specs) out.push_back(simulate(spec, sys, opt));
  return out;
}

struct CalibrationResult {
  double beta = 0.0;
  double achieved_rate = 0.0;
  int evaluations = 0;
};

// Finds the mixing coefficient whose simulated infection rate under current
// practice (annual skin testing) matches the target, by bisection under
// common random numbers.  The response is monotone up to Monte Carlo noise;
// gross violations abort rather than silently returning a bogus root.
inline CalibrationResult calibrate_beta(double target, SystemParams sys,
                                        double tol = 5e-4,
                                        const SimOptions& opt = {200, 20, 10, 1}) {
  if (target < 0.0 || target > 1.0)
    throw std::invalid_argument("calibrate_beta: target outside [0, 1]");
  const PolicySpec current = annual_skin_policy();
  CalibrationResult r;
  auto rate_at = [&](double beta) {
    sys.beta = beta;
    ++r.evaluations;
    return simulate(current, sys, opt).infection_rate;
  };

  double lo = 0.0, f_lo = rate_at(0.0);
  if (target <= f_lo + tol) {
    r.beta = 0.0;
    r.achieved_rate = f_lo;
    return r;
  }
  double hi = 1.0, f_hi = rate_at(1.0);
  if (f_hi + tol < target) {
    char msg[160];
    std::snprintf(msg, sizeof(msg),
                  "calibrate_beta: target rate %.4f unreachable; rate at full "
                  "mixing is %.4f",
                  target, f_hi);
    throw std::runtime_error(msg);
  }

  double best_beta = hi, best_rate = f_hi;
  for (int iter = 0; iter < 60 && hi - lo > 1e-9; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double f = rate_at(mid);
    if (f < f_lo - 1e-3 || f > f_hi + 1e-3)
      throw std::runtime_error(
          "calibrate_beta: infection rate not monotone in the mixing "
          "coefficient");
    if (std::fabs(f - target) < std::fabs(best_rate - target)) {
      best_beta = mid;
      best_rate = f;
    }
    if (std::fabs(f - target) <= tol) break;
    if (f < target) {
      lo = mid;
      f_lo = f;
    } else {
      hi = mid;
      f_hi = f;
    }
  }
  r.beta = best_beta;
  r.achieved_rate = best_rate;
  return r;
}

}  // namespace tbs
