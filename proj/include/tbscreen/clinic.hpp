#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <queue>
#include <vector>

#include "tbscreen/model.hpp"
#include "tbscreen/rng.hpp"

// Clinic time model: how many hours an employee loses to a screening episode,
// and a pre-processed upper bound on queueing delay used as a surcharge.

namespace tbs {

// Expected hours one employee spends on a test episode, excluding queueing.
// A skin test needs a placement visit and a reading visit; new hires take the
// two-round protocol and may miss the reading window, forcing a restart of
// one round.  p_positive adds the expected X-ray follow-up.
inline double expected_time_per_employee(TestKind test, bool is_new,
                                         double p_positive,
                                         const ClinicParams& cp) {
  double hours = 0.0;
  if (test == TestKind::Blood) {
    hours = cp.t_blood;
  } else if (!is_new) {
    hours = 2.0 * cp.t_skin_visit;
  } else {
    hours = 4.0 * cp.t_skin_visit;
    const double p = cp.p_missed_window;
    const double restarts = cp.geometric_restart ? p / (1.0 - p) : p;
    hours += restarts * 2.0 * cp.t_skin_visit;
  }
  return hours + p_positive * cp.t_xray;
}

// Upper bound on the mean queueing delay for one group's employees: a worst
// case testing season in which every other group shows up at its maximum size.
//
// Other groups' arrivals are placed deterministically at k*H/N so that growing
// their maxima only adds arrival times (the original set is kept), which makes
// the bound monotone under added load path by path.  Only the tagged group's
// arrival times are random, seeded from (seed, group).  Service is
// first-come-first-served by `servers` administrators at fixed rate.
inline double waiting_upper_bound(GroupId group, const SystemParams& sys,
                                  const ClinicParams& cp, std::uint64_t seed) {
  long background = 0;
  for (const auto& [id, gp] : sys.groups) {
    if (id == group) continue;
    background += gp.max_new + gp.max_ongoing;
  }
  const GroupState s0 = initial_state(sys, group);
  const int tagged = s0.new_arrivals + s0.ongoing;
  if (tagged == 0) return 0.0;

  const double horizon = cp.season_hours;
  struct Arrival {
    double time;
    int kind;  // 0 = background, 1 = tagged; background wins ties
  };
  std::vector<Arrival> arrivals;
  arrivals.reserve(static_cast<std::size_t>(background) + tagged);
  for (long k = 0; k < background; ++k)
    arrivals.push_back({horizon * static_cast<double>(k) / background, 0});
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(group.salary),
                   static_cast<std::uint64_t>(group.risk)));
  for (int k = 0; k < tagged; ++k) arrivals.push_back({horizon * rng.uniform(), 1});
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const Arrival& a, const Arrival& b) {
                     if (a.time != b.time) return a.time < b.time;
                     return a.kind < b.kind;
                   });

  const double service = 1.0 / cp.service_rate;
  std::priority_queue<double, std::vector<double>, std::greater<double>> free_at;
  for (int i = 0; i < cp.servers; ++i) free_at.push(0.0);
  double total_wait = 0.0;
  for (const Arrival& a : arrivals) {
    const double free = free_at.top();
    free_at.pop();
    const double start = a.time > free ? a.time : free;
    if (a.kind == 1) total_wait += start - a.time;
    free_at.push(start + service);
  }
  return total_wait / tagged;
}

struct GroupClinicHours {
  double skin_new = 0.0;
  double skin_ongoing = 0.0;
  double blood_new = 0.0;
  double blood_ongoing = 0.0;
  double wait_bound = 0.0;
};

// Per-group hours per tested employee, waiting surcharge included.  X-ray
// follow-up time is state dependent (it scales with the positive rate), so it
// is kept out of the entries; consumers add expected positives * xray_hours.
struct ClinicModel {
  double xray_hours = 0.0;
  std::map<GroupId, GroupClinicHours> hours;

  double tested_hours(GroupId id, TestKind test, bool is_new) const {
    const GroupClinicHours& h = hours.at(id);
    if (test == TestKind::Blood) return is_new ? h.blood_new : h.blood_ongoing;
    return is_new ? h.skin_new : h.skin_ongoing;
  }
};

inline ClinicModel build_clinic_model(const SystemParams& sys,
                                      const ClinicParams& cp,
                                      std::uint64_t seed) {
  ClinicModel cm;
  cm.xray_hours = cp.t_xray;
  for (const auto& [id, gp] : sys.groups) {
    GroupClinicHours h;
    h.wait_bound = waiting_upper_bound(id, sys, cp, seed);
    h.skin_new = expected_time_per_employee(TestKind::Skin, true, 0.0, cp) + h.wait_bound;
    h.skin_ongoing =
        expected_time_per_employee(TestKind::Skin, false, 0.0, cp) + h.wait_bound;
    h.blood_new =
        expected_time_per_employee(TestKind::Blood, true, 0.0, cp) + h.wait_bound;
    h.blood_ongoing =
        expected_time_per_employee(TestKind::Blood, false, 0.0, cp) + h.wait_bound;
    cm.hours[id] = h;
  }
  return cm;
}

}  // namespace tbs
