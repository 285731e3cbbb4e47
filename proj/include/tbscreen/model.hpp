#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

// Parameter model for yearly tuberculosis screening of a hospital workforce.
//
// Employees are partitioned into groups by (salary band, risk band), indexed
// from 1.  Risk band 1 is the BCG-vaccinated population, which makes the skin
// test far less specific for them.  Each group evolves independently; contact
// across groups is assumed zero (see SystemParams::contact).

namespace tbs {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Malformed JSON text.
struct ParseError : ConfigError {
  using ConfigError::ConfigError;
};
// Well-formed JSON violating model invariants; message lists every violation.
struct ValidationError : ConfigError {
  using ConfigError::ConfigError;
};

struct GroupId {
  int salary = 0;
  int risk = 0;
  auto operator<=>(const GroupId&) const = default;
};

inline std::string to_string(GroupId id) {
  return std::to_string(id.salary) + "," + std::to_string(id.risk);
}

enum class TestKind { Skin, Blood };
enum class OngoingTest { None, Skin, Blood };

// One screening decision: which test new hires take this year, and whether /
// how ongoing employees are tested.  New hires are always tested.
struct Action {
  TestKind new_test = TestKind::Blood;
  OngoingTest ongoing_test = OngoingTest::None;
  auto operator<=>(const Action&) const = default;
};

// Group state at the start of a screening year.
//   new_arrivals: employees hired since the last screening round
//   ongoing:      retained employees not known to be infected
//   undetected:   employees infected last year whose infection went undetected
struct GroupState {
  int new_arrivals = 0;
  int ongoing = 0;
  int undetected = 0;
  auto operator<=>(const GroupState&) const = default;
};

struct GroupParams {
  double arrival_rate = 0.0;     // Poisson mean of yearly hires
  double leave_prob = 0.0;       // per-employee yearly attrition probability
  double patient_contact = 1.0;  // fraction of time exposed to patients
  double transmissibility = 0.0; // per-contact infection probability
  double skin_fp = 0.0;          // skin test false-positive rate (one reading)
  double skin_fn = 0.0;          // skin test false-negative rate (one reading)
  double blood_fp = 0.0;
  double blood_fn = 0.0;
  double undetected_cost = 0.0;  // dollars per undetected infection
  double lost_time_rate = 0.0;   // dollars per clinic hour
  // State-space bounds; -1 means "derive the default".
  int max_new = -1;
  int max_ongoing = -1;
  int max_undetected = -1;
};

struct ClinicParams {
  double t_blood = 0.5;        // hours for a blood draw
  double t_skin_visit = 0.5;   // hours per skin test visit
  double t_xray = 1.0;         // hours for an X-ray follow-up
  double p_missed_window = 0.1;  // chance a new hire misses the reading window
  int servers = 2;             // test administrators on duty
  double service_rate = 6.0;   // employees an administrator serves per hour
  double season_hours = 2000.0;  // clinic hours over which a year's tests spread
  bool geometric_restart = false;  // repeated restarts instead of at most one
};

enum class InitialMode { SteadyState, Configured };

struct SystemParams {
  std::map<GroupId, GroupParams> groups;
  double beta = 0.1;       // community (non-patient) exposure scale
  double cost_blood = 45.0;
  double cost_skin = 8.0;
  double cost_xray = 100.0;
  double discount = 0.97;
  bool double_charge_new_skin = false;  // bill both skin placements for hires
  ClinicParams clinic;
  InitialMode initial_mode = InitialMode::SteadyState;
  std::map<GroupId, GroupState> initial;  // used when initial_mode == Configured

  // Cross-group contact mixing.  The per-group decomposition assumes none.
  double contact(GroupId a, GroupId b) const { return a == b ? 1.0 : 0.0; }
};

// Smallest k whose Poisson(rate) upper tail P(X > k) is below 1e-3; the
// arrival distribution clamped there loses less than that much mass.
inline int default_max_new(double rate) {
  if (rate <= 0.0) return 1;
  double term = std::exp(-rate);
  double cdf = term;
  int k = 0;
  while (1.0 - cdf >= 1e-3) {
    ++k;
    term *= rate / k;
    cdf += term;
  }
  return k < 1 ? 1 : k;
}

inline void apply_default_bounds(GroupParams& gp) {
  if (gp.max_new < 0) gp.max_new = default_max_new(gp.arrival_rate);
  if (gp.max_ongoing < 0) {
    const long steady = std::lround(gp.arrival_rate / gp.leave_prob);
    gp.max_ongoing = static_cast<int>(4 * (steady < 1 ? 1 : steady));
  }
  if (gp.max_undetected < 0) {
    const long scaled = std::lround(0.2 * gp.max_ongoing);
    gp.max_undetected = static_cast<int>(scaled < 5 ? 5 : scaled);
  }
}

namespace detail {

inline GroupId parse_group_key(const std::string& key,
                               std::vector<std::string>& errors) {
  const auto comma = key.find(',');
  try {
    if (comma != std::string::npos) {
      const int salary = std::stoi(key.substr(0, comma));
      const int risk = std::stoi(key.substr(comma + 1));
      if (salary >= 1 && risk >= 1) return GroupId{salary, risk};
    }
  } catch (const std::exception&) {
  }
  errors.push_back("groups key '" + key + "' is not of the form 'salary,risk'");
  return GroupId{0, 0};
}

inline double get_num(const nlohmann::json& j, const std::string& field,
                      const std::string& where, std::vector<std::string>& errors,
                      double fallback = 0.0, bool required = true) {
  if (!j.contains(field)) {
    if (required) errors.push_back(where + "." + field + " is missing");
    return fallback;
  }
  if (!j.at(field).is_number()) {
    errors.push_back(where + "." + field + " must be a number");
    return fallback;
  }
  return j.at(field).get<double>();
}

inline void check_prob(double v, const std::string& what,
                       std::vector<std::string>& errors) {
  if (!(v >= 0.0 && v <= 1.0))
    errors.push_back(what + " must lie in [0,1], got " + std::to_string(v));
}

}  // namespace detail

inline SystemParams load_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }

  std::vector<std::string> errors;
  SystemParams sys;

  if (!j.contains("groups") || !j.at("groups").is_object() ||
      j.at("groups").empty()) {
    errors.push_back("groups must be a non-empty object keyed by 'salary,risk'");
  } else {
    for (const auto& [key, gj] : j.at("groups").items()) {
      const GroupId id = detail::parse_group_key(key, errors);
      if (id.salary == 0) continue;
      const std::string where = "groups[" + key + "]";
      GroupParams gp;
      gp.arrival_rate = detail::get_num(gj, "lambda", where, errors);
      gp.leave_prob = detail::get_num(gj, "p_leave", where, errors);
      gp.patient_contact = detail::get_num(gj, "nu", where, errors);
      gp.transmissibility = detail::get_num(gj, "xi", where, errors);
      gp.skin_fp = detail::get_num(gj, "skin_fp", where, errors);
      gp.skin_fn = detail::get_num(gj, "skin_fn", where, errors);
      gp.blood_fp = detail::get_num(gj, "blood_fp", where, errors);
      gp.blood_fn = detail::get_num(gj, "blood_fn", where, errors);
      gp.undetected_cost = detail::get_num(gj, "c_undetected", where, errors);
      gp.lost_time_rate = detail::get_num(gj, "c_lost_per_hour", where, errors);
      gp.max_new = static_cast<int>(
          detail::get_num(gj, "max_new", where, errors, -1.0, false));
      gp.max_ongoing = static_cast<int>(
          detail::get_num(gj, "max_ongoing", where, errors, -1.0, false));
      gp.max_undetected = static_cast<int>(
          detail::get_num(gj, "max_undetected", where, errors, -1.0, false));

      if (gp.arrival_rate <= 0.0)
        errors.push_back(where + ".lambda must be positive");
      if (!(gp.leave_prob > 0.0 && gp.leave_prob <= 1.0))
        errors.push_back(where + ".p_leave must lie in (0,1]");
      detail::check_prob(gp.patient_contact, where + ".nu", errors);
      detail::check_prob(gp.transmissibility, where + ".xi", errors);
      detail::check_prob(gp.skin_fp, where + ".skin_fp", errors);
      detail::check_prob(gp.skin_fn, where + ".skin_fn", errors);
      detail::check_prob(gp.blood_fp, where + ".blood_fp", errors);
      detail::check_prob(gp.blood_fn, where + ".blood_fn", errors);
      if (gp.undetected_cost < 0.0)
        errors.push_back(where + ".c_undetected must be nonnegative");
      if (gp.lost_time_rate < 0.0)
        errors.push_back(where + ".c_lost_per_hour must be nonnegative");
      sys.groups[id] = gp;
    }
  }

  sys.beta = detail::get_num(j, "beta", "config", errors, 0.1, false);
  detail::check_prob(sys.beta, "beta", errors);
  if (j.contains("costs")) {
    const auto& cj = j.at("costs");
    sys.cost_blood = detail::get_num(cj, "blood", "costs", errors);
    sys.cost_skin = detail::get_num(cj, "skin", "costs", errors);
    sys.cost_xray = detail::get_num(cj, "xray", "costs", errors);
    if (sys.cost_blood < 0 || sys.cost_skin < 0 || sys.cost_xray < 0)
      errors.push_back("costs must be nonnegative");
  }
  sys.discount = detail::get_num(j, "discount", "config", errors, 0.97, false);
  if (!(sys.discount > 0.0 && sys.discount < 1.0))
    errors.push_back("discount must lie in (0,1)");
  if (j.contains("double_charge_new_skin")) {
    if (!j.at("double_charge_new_skin").is_boolean())
      errors.push_back("double_charge_new_skin must be a boolean");
    else
      sys.double_charge_new_skin = j.at("double_charge_new_skin").get<bool>();
  }

  if (j.contains("clinic")) {
    const auto& cj = j.at("clinic");
    ClinicParams cp;
    cp.t_blood = detail::get_num(cj, "t_blood", "clinic", errors, cp.t_blood, false);
    cp.t_skin_visit =
        detail::get_num(cj, "t_skin_visit", "clinic", errors, cp.t_skin_visit, false);
    cp.t_xray = detail::get_num(cj, "t_xray", "clinic", errors, cp.t_xray, false);
    cp.p_missed_window = detail::get_num(cj, "p_missed_window", "clinic", errors,
                                         cp.p_missed_window, false);
    cp.servers = static_cast<int>(
        detail::get_num(cj, "servers", "clinic", errors, cp.servers, false));
    cp.service_rate = detail::get_num(cj, "service_rate", "clinic", errors,
                                      cp.service_rate, false);
    cp.season_hours = detail::get_num(cj, "season_hours", "clinic", errors,
                                      cp.season_hours, false);
    if (cj.contains("geometric_restart")) {
      if (!cj.at("geometric_restart").is_boolean())
        errors.push_back("clinic.geometric_restart must be a boolean");
      else
        cp.geometric_restart = cj.at("geometric_restart").get<bool>();
    }
    if (cp.t_blood < 0 || cp.t_skin_visit < 0 || cp.t_xray < 0)
      errors.push_back("clinic times must be nonnegative");
    detail::check_prob(cp.p_missed_window, "clinic.p_missed_window", errors);
    if (cp.servers < 1) errors.push_back("clinic.servers must be at least 1");
    if (cp.service_rate <= 0.0)
      errors.push_back("clinic.service_rate must be positive");
    if (cp.season_hours <= 0.0)
      errors.push_back("clinic.season_hours must be positive");
    sys.clinic = cp;
  }

  if (j.contains("initial")) {
    sys.initial_mode = InitialMode::Configured;
    if (!j.at("initial").is_object()) {
      errors.push_back("initial must be an object keyed like groups");
    } else {
      for (const auto& [key, sj] : j.at("initial").items()) {
        const GroupId id = detail::parse_group_key(key, errors);
        if (id.salary == 0) continue;
        if (!sj.is_array() || sj.size() != 3 || !sj[0].is_number() ||
            !sj[1].is_number() || !sj[2].is_number()) {
          errors.push_back("initial[" + key + "] must be [new, ongoing, undetected]");
          continue;
        }
        GroupState s{sj[0].get<int>(), sj[1].get<int>(), sj[2].get<int>()};
        if (s.new_arrivals < 0 || s.ongoing < 0 || s.undetected < 0)
          errors.push_back("initial[" + key + "] must be nonnegative");
        sys.initial[id] = s;
      }
    }
  }

  // Bounds get defaults only after the raw fields check out.
  for (auto& [id, gp] : sys.groups) {
    const std::string where = "groups[" + to_string(id) + "]";
    if (gp.max_new == 0 || gp.max_new < -1)
      errors.push_back(where + ".max_new must be positive");
    if (gp.max_ongoing == 0 || gp.max_ongoing < -1)
      errors.push_back(where + ".max_ongoing must be positive");
    if (gp.max_undetected == 0 || gp.max_undetected < -1)
      errors.push_back(where + ".max_undetected must be positive");
    if (gp.arrival_rate > 0.0 && gp.leave_prob > 0.0) {
      apply_default_bounds(gp);
      if (gp.max_undetected > gp.max_new + gp.max_ongoing)
        errors.push_back(where + ".max_undetected exceeds max_new + max_ongoing");
    }
  }
  for (const auto& [id, s] : sys.initial) {
    if (!sys.groups.count(id)) {
      errors.push_back("initial[" + to_string(id) + "] has no matching group");
      continue;
    }
    const auto& gp = sys.groups.at(id);
    if (gp.max_new >= 0 &&
        (s.new_arrivals > gp.max_new || s.ongoing > gp.max_ongoing ||
         s.undetected > gp.max_undetected))
      errors.push_back("initial[" + to_string(id) + "] exceeds the state bounds");
  }

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
  return sys;
}

inline std::string serialize(const SystemParams& sys) {
  nlohmann::json j;
  for (const auto& [id, gp] : sys.groups) {
    nlohmann::json gj;
    gj["lambda"] = gp.arrival_rate;
    gj["p_leave"] = gp.leave_prob;
    gj["nu"] = gp.patient_contact;
    gj["xi"] = gp.transmissibility;
    gj["skin_fp"] = gp.skin_fp;
    gj["skin_fn"] = gp.skin_fn;
    gj["blood_fp"] = gp.blood_fp;
    gj["blood_fn"] = gp.blood_fn;
    gj["c_undetected"] = gp.undetected_cost;
    gj["c_lost_per_hour"] = gp.lost_time_rate;
    gj["max_new"] = gp.max_new;
    gj["max_ongoing"] = gp.max_ongoing;
    gj["max_undetected"] = gp.max_undetected;
    j["groups"][to_string(id)] = gj;
  }
  j["beta"] = sys.beta;
  j["costs"] = {{"blood", sys.cost_blood},
                {"skin", sys.cost_skin},
                {"xray", sys.cost_xray}};
  j["discount"] = sys.discount;
  j["double_charge_new_skin"] = sys.double_charge_new_skin;
  j["clinic"] = {{"t_blood", sys.clinic.t_blood},
                 {"t_skin_visit", sys.clinic.t_skin_visit},
                 {"t_xray", sys.clinic.t_xray},
                 {"p_missed_window", sys.clinic.p_missed_window},
                 {"servers", sys.clinic.servers},
                 {"service_rate", sys.clinic.service_rate},
                 {"season_hours", sys.clinic.season_hours},
                 {"geometric_restart", sys.clinic.geometric_restart}};
  if (sys.initial_mode == InitialMode::Configured) {
    for (const auto& [id, s] : sys.initial)
      j["initial"][to_string(id)] = {s.new_arrivals, s.ongoing, s.undetected};
  }
  return j.dump(2) + "\n";
}

// Parameter set from the published hospital study (nine groups, salary bands
// {physician, nurse-technician, clerical} x risk bands {BCG, high, moderate}).
inline SystemParams paper_defaults() {
  SystemParams sys;
  const double lambda[3][3] = {{4, 14, 10}, {15, 50, 35}, {4, 14, 10}};
  const double undetected_cost[3] = {5000, 1000, 1000};
  const double lost_rate[3] = {150, 30, 29};
  for (int salary = 1; salary <= 3; ++salary) {
    for (int risk = 1; risk <= 3; ++risk) {
      GroupParams gp;
      gp.arrival_rate = lambda[salary - 1][risk - 1];
      gp.leave_prob = 0.15;
      gp.patient_contact = 1.0;
      if (salary == 3 && risk == 1) gp.patient_contact = 0.75;
      if (salary == 3 && risk == 2) gp.patient_contact = 0.5;
      gp.transmissibility = risk == 1 ? 0.05 : 0.22;
      gp.skin_fp = risk == 1 ? 0.6 : 0.27;
      gp.skin_fn = 0.04;
      gp.blood_fp = 0.176;
      gp.blood_fn = 0.008;
      gp.undetected_cost = undetected_cost[salary - 1];
      gp.lost_time_rate = lost_rate[salary - 1];
      apply_default_bounds(gp);
      sys.groups[GroupId{salary, risk}] = gp;
    }
  }
  return sys;
}

inline GroupState initial_state(const SystemParams& sys, GroupId id) {
  const auto& gp = sys.groups.at(id);
  if (sys.initial_mode == InitialMode::Configured) {
    auto it = sys.initial.find(id);
    if (it != sys.initial.end()) return it->second;
  }
  GroupState s;
  s.new_arrivals = static_cast<int>(std::lround(gp.arrival_rate));
  const int steady = static_cast<int>(std::lround(gp.arrival_rate / gp.leave_prob));
  s.ongoing = steady < gp.max_ongoing ? steady : gp.max_ongoing;
  s.undetected = 0;
  return s;
}

}  // namespace tbs
