#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tbscreen/model.hpp"
#include "tbscreen/sim.hpp"
#include "tbscreen/solve.hpp"

namespace tbs {

// ---------------------------------------------------------------------------
// Single-group trajectory rollout.
// ---------------------------------------------------------------------------

struct StepRecord {
  int year = 0;
  GroupState state;  // at the start of the year, before the action
  Action action;
};

// One stochastic trajectory of a single group under a policy, using the same
// substreams as the first replication of simulate(), so traces and simulation
// tallies describe the same sample paths.
inline std::vector<StepRecord> rollout_trace(const PolicySpec& spec,
                                             const SystemParams& sys,
                                             GroupId id, int years,
                                             std::uint64_t seed) {
  if (years < 1)
    throw std::invalid_argument("rollout_trace: years must be positive");
  SystemParams resolved = sys;
  for (auto& [gid, gp] : resolved.groups) apply_default_bounds(gp);
  const GroupParams& gp = resolved.groups.at(id);
  GroupState s = initial_state(resolved, id);

  std::vector<StepRecord> out;
  out.reserve(static_cast<std::size_t>(years));
  for (int year = 0; year < years; ++year) {
    const Action a = policy_action(spec, id, s, year);
    Rng rng(mix_seed(seed, 0,
                     static_cast<std::uint64_t>(id.salary) * 256 + id.risk,
                     static_cast<std::uint64_t>(year)));
    const detail::TransitionDraws d =
        detail::draw_transition(rng, s, gp, resolved.beta, a);
    out.push_back({year, s, a});
    s = detail::next_state(s, d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threshold extraction from a lookup policy.
// ---------------------------------------------------------------------------

struct ThresholdEstimate {
  GroupId group;
  int fixed_x = 0;
  TestKind new_test = TestKind::Blood;   // dominant new-hire choice on the slice
  std::vector<ThresholdBand> bands;      // boundary medians as shares u / y
  std::vector<ThresholdBand> rule_bands; // same boundaries as u/(x+y) rule edges
  std::string diagnostic;                // nonempty when no boundary exists
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Scans the (y, u) slice of a policy at a fixed new-arrival count and reports,
// per test kind, the median share of undetected employees at which the ongoing
// action switches on.  Reported bands use the share u / y; rule_bands restate
// each boundary in the u / (x + y) metric that ThresholdRule evaluates, placed
// half a unit below the boundary so "test from u* up" survives the strict
// comparison.
inline ThresholdEstimate extract_thresholds(const Policy& pol, GroupId id,
                                            int fixed_x) {
  if (fixed_x < 0 || fixed_x > pol.max_new())
    throw std::invalid_argument(
        "extract_thresholds: fixed_x outside the policy grid");
  ThresholdEstimate est;
  est.group = id;
  est.fixed_x = fixed_x;

  std::vector<double> skin_pct, blood_pct, skin_rule, blood_rule;
  int skin_new = 0, blood_new = 0;
  for (int y = 0; y <= pol.max_ongoing(); ++y) {
    int u_first = -1, u_blood = -1;
    OngoingTest first_kind = OngoingTest::None;
    for (int u = 0; u <= pol.max_undetected(); ++u) {
      const Action a = pol.at({fixed_x, y, u});
      if (a.new_test == TestKind::Skin)
        ++skin_new;
      else
        ++blood_new;
      if (a.ongoing_test != OngoingTest::None && u_first < 0) {
        u_first = u;
        first_kind = a.ongoing_test;
      }
      if (a.ongoing_test == OngoingTest::Blood && u_blood < 0) u_blood = u;
    }
    if (y == 0 || u_first < 0) continue;  // no workforce or no boundary
    const double denom = y;
    const double rule_denom = fixed_x + y;
    if (first_kind == OngoingTest::Skin) {
      skin_pct.push_back(u_first / denom);
      skin_rule.push_back((u_first - 0.5) / rule_denom);
      if (u_blood >= 0) {
        blood_pct.push_back(u_blood / denom);
        blood_rule.push_back((u_blood - 0.5) / rule_denom);
      }
    } else {
      blood_pct.push_back(u_first / denom);
      blood_rule.push_back((u_first - 0.5) / rule_denom);
    }
  }

  est.new_test = skin_new > blood_new ? TestKind::Skin : TestKind::Blood;
  if (!skin_pct.empty()) {
    est.bands.push_back({detail::median(skin_pct), TestKind::Skin});
    est.rule_bands.push_back({detail::median(skin_rule), TestKind::Skin});
  }
  if (!blood_pct.empty()) {
    est.bands.push_back({detail::median(blood_pct), TestKind::Blood});
    est.rule_bands.push_back({detail::median(blood_rule), TestKind::Blood});
  }
  auto ascending = [](const ThresholdBand& a, const ThresholdBand& b) {
    return a.threshold < b.threshold;
  };
  std::stable_sort(est.bands.begin(), est.bands.end(), ascending);
  std::stable_sort(est.rule_bands.begin(), est.rule_bands.end(), ascending);
  if (est.bands.empty())
    est.diagnostic =
        "ongoing action never departs from no-test on this slice";
  return est;
}

inline ThresholdRule to_threshold_rule(const ThresholdEstimate& est) {
  ThresholdRule rule;
  rule.new_test = est.new_test;
  rule.period_years = 0;
  rule.bands = est.rule_bands;
  return rule;
}

// ---------------------------------------------------------------------------
// Testing-frequency estimation.
// ---------------------------------------------------------------------------

struct FrequencyEstimate {
  GroupId group;
  TestKind test = TestKind::Blood;  // dominant kind among administered tests
  bool infrequent = false;          // fires in fewer than 5% of years
  int period_years = 0;             // >= 1 when not infrequent
  int administrations = 0;          // years with an ongoing test
  double trigger_threshold = -1.0;  // attached share u / y; < 0 when absent
};

// Rolls the policy out once per group over the horizon and reads testing
// cadence off the realized actions; groups that almost never test are labeled
// infrequent and annotated with the share that triggers them, when one exists.
inline std::vector<FrequencyEstimate> estimate_frequencies(
    const PolicySpec& spec, const SystemParams& sys, int horizon,
    std::uint64_t seed) {
  if (horizon < 10)
    throw std::invalid_argument(
        "estimate_frequencies: horizon shorter than 10 years");
  std::vector<FrequencyEstimate> out;
  for (const auto& [id, gp] : sys.groups) {
    FrequencyEstimate est;
    est.group = id;
    int skin = 0, blood = 0;
    for (const StepRecord& rec : rollout_trace(spec, sys, id, horizon, seed)) {
      if (rec.action.ongoing_test == OngoingTest::Skin) ++skin;
      if (rec.action.ongoing_test == OngoingTest::Blood) ++blood;
    }
    est.administrations = skin + blood;
    est.test = skin > blood ? TestKind::Skin : TestKind::Blood;
    if (est.administrations >= horizon / 20.0) {
      est.period_years = std::max(
          1, static_cast<int>(std::lround(static_cast<double>(horizon) /
                                          est.administrations)));
      out.push_back(est);
      continue;
    }
    est.infrequent = true;
    if (spec.kind == PolicyKind::Lookup) {
      const auto it = spec.lookup.find(id);
      if (it != spec.lookup.end()) {
        const Policy& pol = it->second;
        const int fx =
            std::min(pol.max_new(),
                     static_cast<int>(std::lround(gp.arrival_rate)));
        const ThresholdEstimate te = extract_thresholds(pol, id, fx);
        if (!te.bands.empty()) {
          est.trigger_threshold = te.bands.front().threshold;
          est.test = te.bands.back().test;
        }
      }
    } else if (spec.kind == PolicyKind::Threshold) {
      const auto it = spec.rules.find(id);
      if (it != spec.rules.end() && !it->second.bands.empty()) {
        est.trigger_threshold = it->second.bands.front().threshold;
        est.test = it->second.bands.back().test;
      }
    }
    out.push_back(est);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Region maps.
// ---------------------------------------------------------------------------

struct RegionMap {
  GroupId group;
  int fixed_x = 0;
  int max_ongoing = 0;
  int max_undetected = 0;
  std::vector<int> codes;  // (y, u) row-major; 1 none, 2 skin, 3 blood
  int code(int y, int u) const {
    return codes[static_cast<std::size_t>(y) * (max_undetected + 1) + u];
  }
};

inline int ongoing_code(OngoingTest o) {
  switch (o) {
    case OngoingTest::None: return 1;
    case OngoingTest::Skin: return 2;
    case OngoingTest::Blood: return 3;
  }
  return 1;
}

// Evaluates the policy's ongoing action over the whole (y, u) grid at one
// new-arrival count.
inline RegionMap export_region_map(const Policy& pol, GroupId id,
                                   int fixed_x) {
  if (fixed_x < 0 || fixed_x > pol.max_new())
    throw std::invalid_argument(
        "export_region_map: fixed_x outside the policy grid");
  RegionMap map;
  map.group = id;
  map.fixed_x = fixed_x;
  map.max_ongoing = pol.max_ongoing();
  map.max_undetected = pol.max_undetected();
  map.codes.reserve(static_cast<std::size_t>(map.max_ongoing + 1) *
                    (map.max_undetected + 1));
  for (int y = 0; y <= map.max_ongoing; ++y)
    for (int u = 0; u <= map.max_undetected; ++u)
      map.codes.push_back(ongoing_code(pol.at({fixed_x, y, u}).ongoing_test));
  return map;
}

inline std::string region_map_csv(const RegionMap& map) {
  std::string out = "y,u,action\n";
  char line[48];
  for (int y = 0; y <= map.max_ongoing; ++y)
    for (int u = 0; u <= map.max_undetected; ++u) {
      std::snprintf(line, sizeof(line), "%d,%d,%d\n", y, u, map.code(y, u));
      out += line;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Frequency reports.
// ---------------------------------------------------------------------------

inline std::string frequency_csv(const std::vector<FrequencyEstimate>& ests) {
  std::string out = "salary,risk,test,period_years,administrations,trigger\n";
  char line[96];
  for (const FrequencyEstimate& e : ests) {
    const char* kind = e.test == TestKind::Skin ? "skin" : "blood";
    if (e.trigger_threshold >= 0.0)
      std::snprintf(line, sizeof(line), "%d,%d,%s,%d,%d,%.6g\n",
                    e.group.salary, e.group.risk, kind, e.period_years,
                    e.administrations, e.trigger_threshold);
    else
      std::snprintf(line, sizeof(line), "%d,%d,%s,%d,%d,\n", e.group.salary,
                    e.group.risk, kind, e.period_years, e.administrations);
    out += line;
  }
  return out;
}

inline std::string frequency_table(const std::vector<FrequencyEstimate>& ests) {
  std::string out;
  char line[160];
  for (const FrequencyEstimate& e : ests) {
    const char* kind = e.test == TestKind::Skin ? "skin" : "blood";
    if (!e.infrequent && e.period_years == 1)
      std::snprintf(line, sizeof(line), "group (%d,%d): %s test every year\n",
                    e.group.salary, e.group.risk, kind);
    else if (!e.infrequent)
      std::snprintf(line, sizeof(line),
                    "group (%d,%d): %s test every %d years\n", e.group.salary,
                    e.group.risk, kind, e.period_years);
    else if (e.trigger_threshold >= 0.0)
      std::snprintf(line, sizeof(line),
                    "group (%d,%d): %s test when the undetected share exceeds "
                    "%.1f%%\n",
                    e.group.salary, e.group.risk, kind,
                    100.0 * e.trigger_threshold);
    else
      std::snprintf(line, sizeof(line),
                    "group (%d,%d): no ongoing testing observed\n",
                    e.group.salary, e.group.risk);
    out += line;
  }
  return out;
}

}  // namespace tbs
