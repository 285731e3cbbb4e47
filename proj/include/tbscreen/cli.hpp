#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tbscreen/analyze.hpp"
#include "tbscreen/clinic.hpp"
#include "tbscreen/mdp.hpp"
#include "tbscreen/model.hpp"
#include "tbscreen/sim.hpp"
#include "tbscreen/solve.hpp"
#include "tbscreen/version.hpp"

namespace tbs {
namespace cli_detail {

// Dense-basis LP solves above this many states per group get refused instead
// of grinding; the desk preset keeps every study group well under it.
inline constexpr long kMaxSolveStates = 2000;

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

struct CommonOpts {
  std::string config;  // empty = built-in study defaults
  std::string out = ".";
  std::string preset = "paper";
  std::uint64_t seed = 1;
};

inline void add_common(CLI::App* sub, CommonOpts& c) {
  sub->add_option("--config", c.config,
                  "parameter file (JSON); omitted = built-in study defaults");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--preset", c.preset,
                  "desk scales arrivals by 0.2 and tightens state bounds")
      ->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--seed", c.seed, "root seed for all stochastic work");
}

inline SystemParams load_system(const std::string& path) {
  if (path.empty()) return paper_defaults();
  std::ifstream in(path, std::ios::binary);
  if (!in.good())
    throw ValidationError("cannot read config file: " + path);
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return load_config(text);
}

inline SystemParams apply_preset(SystemParams sys, const std::string& preset) {
  if (preset != "desk") return sys;
  for (auto& [id, gp] : sys.groups) {
    gp.arrival_rate *= 0.2;
    gp.max_new = std::min(default_max_new(gp.arrival_rate), 8);
    gp.max_ongoing = std::min(
        4 * std::max(1, static_cast<int>(
                            std::lround(gp.arrival_rate / gp.leave_prob))),
        15);
    gp.max_undetected = 5;
  }
  return sys;
}

inline SystemParams resolve(const CommonOpts& c) {
  return apply_preset(load_system(c.config), c.preset);
}

inline long state_count(const GroupParams& gp) {
  return static_cast<long>(gp.max_new + 1) * (gp.max_ongoing + 1) *
         (gp.max_undetected + 1);
}

inline void require_solvable(const SystemParams& sys) {
  for (const auto& [id, gp] : sys.groups) {
    const long n = state_count(gp);
    if (n > kMaxSolveStates)
      throw ValidationError(
          "group " + to_string(id) + " has " + std::to_string(n) +
          " states, above the solver cap of " + std::to_string(kMaxSolveStates) +
          "; rerun with --preset desk or tighten the state bounds");
  }
}

struct FileSet {
  std::string dir;
  std::vector<std::string> written;

  void write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out.good()) throw std::runtime_error("cannot write " + path);
    written.push_back(path);
  }
};

inline void write_manifest(FileSet& files, const std::string& command,
                           const CommonOpts& c, const SystemParams& sys,
                           double wall_seconds) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = c.config.empty() ? "builtin" : c.config;
  j["seed"] = c.seed;
  j["version"] = kVersion;
  j["param_hash"] = hex64(fnv1a(serialize(sys)));
  j["outputs"] = files.written;
  j["wall_time_seconds"] = wall_seconds;
  std::filesystem::create_directories(files.dir);
  const std::string path =
      (std::filesystem::path(files.dir) / "manifest.json").string();
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out.good()) throw std::runtime_error("cannot write " + path);
}

inline GroupState clamped_initial(const SystemParams& sys, GroupId id) {
  const GroupParams& gp = sys.groups.at(id);
  GroupState s = initial_state(sys, id);
  s.new_arrivals = std::min(s.new_arrivals, gp.max_new);
  s.ongoing = std::min(s.ongoing, gp.max_ongoing);
  s.undetected = std::min(s.undetected, gp.max_undetected);
  return s;
}

struct SolvedGroup {
  GroupId id;
  CgResult cg;
  Policy policy;
  double wall_seconds = 0.0;
  bool verified = false;
  double exact_objective = 0.0;
  double exact_gap = 0.0;
  int agreements = 0;
  int non_tie_states = 0;
};

inline std::vector<SolvedGroup> solve_groups(const SystemParams& sys,
                                             std::uint64_t seed, bool verify) {
  using Clock = std::chrono::steady_clock;
  const ClinicModel cm = build_clinic_model(sys, sys.clinic, seed);
  std::vector<SolvedGroup> out;
  for (const auto& [id, gp] : sys.groups) {
    SolvedGroup sg;
    sg.id = id;
    const GroupMdp m(id, sys, cm);
    std::vector<double> gamma(static_cast<std::size_t>(m.num_states()), 0.0);
    gamma[static_cast<std::size_t>(m.index(clamped_initial(sys, id)))] = 1.0;

    const auto t0 = Clock::now();
    sg.cg = column_generation(m, gamma, sys.discount);
    sg.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!sg.cg.converged)
      throw std::runtime_error("column generation did not converge for group " +
                               to_string(id));
    sg.policy = make_policy(m, sg.cg.greedy);

    if (verify) {
      sg.verified = true;
      const ViResult vi = value_iteration(m, sys.discount, {1e-10, 200000});
      for (int s = 0; s < m.num_states(); ++s)
        sg.exact_objective += gamma[static_cast<std::size_t>(s)] *
                              vi.value[static_cast<std::size_t>(s)];
      sg.exact_gap = std::fabs(sg.cg.objective - sg.exact_objective) /
                     std::max(1.0, std::fabs(sg.exact_objective));
      for (int s = 0; s < m.num_states(); ++s) {
        const std::vector<double> q = q_values(m, vi.value, sys.discount, s);
        double best = q[0], second = std::numeric_limits<double>::infinity();
        for (double v : q) best = std::min(best, v);
        for (double v : q)
          if (v > best) second = std::min(second, v);
        if (second - best <= 1e-6 * (1.0 + std::fabs(best))) continue;  // tie
        ++sg.non_tie_states;
        if (sg.cg.greedy[static_cast<std::size_t>(s)] ==
            vi.greedy[static_cast<std::size_t>(s)])
          ++sg.agreements;
      }
    }
    out.push_back(std::move(sg));
  }
  return out;
}

inline std::string solve_report(const std::vector<SolvedGroup>& solved) {
  std::string out;
  char line[256];
  for (const SolvedGroup& sg : solved) {
    std::snprintf(line, sizeof(line),
                  "group (%d,%d): objective=%.10g rounds=%d columns=%d "
                  "pivots=%ld wall=%.2fs\n",
                  sg.id.salary, sg.id.risk, sg.cg.objective, sg.cg.rounds,
                  sg.cg.columns, sg.cg.pivots, sg.wall_seconds);
    out += line;
    if (sg.verified) {
      std::snprintf(line, sizeof(line),
                    "  exact check: objective=%.10g relative gap=%.3g greedy "
                    "agreement=%d/%d non-tie states\n",
                    sg.exact_objective, sg.exact_gap, sg.agreements,
                    sg.non_tie_states);
      out += line;
    }
  }
  return out;
}

inline std::string policy_csv(const Policy& pol) {
  std::string out = "x,y,u,action\n";
  char line[64];
  int idx = 0;
  for (int x = 0; x <= pol.max_new(); ++x)
    for (int y = 0; y <= pol.max_ongoing(); ++y)
      for (int u = 0; u <= pol.max_undetected(); ++u) {
        std::snprintf(line, sizeof(line), "%d,%d,%d,%d\n", x, y, u,
                      pol.action_index(idx++));
        out += line;
      }
  return out;
}

inline std::string groups_csv(const SimReport& rep) {
  std::string out =
      "salary,risk,mean_cost,cost_half_width,infection_rate,rate_half_width,"
      "mean_population,blood_tests,skin_tests,xrays\n";
  char line[256];
  for (const GroupSummary& g : rep.groups) {
    std::snprintf(line, sizeof(line),
                  "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  g.id.salary, g.id.risk, g.mean_cost, g.cost_half_width,
                  g.infection_rate, g.rate_half_width, g.mean_population,
                  g.blood_tests, g.skin_tests, g.xrays);
    out += line;
  }
  return out;
}

inline std::string total_csv(const SimReport& rep) {
  char line[192];
  std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g,%.10g,%.10g\n",
                rep.total_cost, rep.total_half_width, rep.infection_rate,
                rep.rate_half_width, rep.alpha_rate);
  return std::string(
             "total_cost,total_half_width,infection_rate,rate_half_width,"
             "alpha_rate\n") +
         line;
}

// Builds the policy a CLI run simulates; "optimal" solves every group first.
inline PolicySpec make_spec(const std::string& name, const SystemParams& sys,
                            std::uint64_t seed) {
  if (name == "current") return annual_skin_policy();
  if (name == "threshold") {
    const auto rules = proposed_rules();
    for (const auto& [id, gp] : sys.groups)
      if (!rules.count(id))
        throw ValidationError("no built-in threshold rule for group " +
                              to_string(id));
    return threshold_policy(rules);
  }
  require_solvable(sys);
  std::map<GroupId, Policy> table;
  for (auto& sg : solve_groups(sys, seed, false))
    table.emplace(sg.id, std::move(sg.policy));
  return lookup_policy(std::move(table));
}

inline GroupId parse_group_flag(const std::string& text) {
  int salary = 0, risk = 0;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%d,%d%c", &salary, &risk, &extra) != 2 ||
      salary < 1 || risk < 1)
    throw ValidationError("--group must be 'salary,risk', got '" + text + "'");
  return {salary, risk};
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

inline void do_solve(const CommonOpts& c, bool verify,
                     const std::string& command) {
  const Timer timer;
  const SystemParams sys = resolve(c);
  require_solvable(sys);
  const auto solved = solve_groups(sys, c.seed, verify);

  FileSet files{c.out, {}};
  const std::string report = solve_report(solved);
  files.write("solve_report.txt", report);
  for (const SolvedGroup& sg : solved) {
    char name[48];
    std::snprintf(name, sizeof(name), "policy_%d_%d.csv", sg.id.salary,
                  sg.id.risk);
    files.write(name, policy_csv(sg.policy));
  }
  write_manifest(files, command, c, sys, timer.seconds());
  std::fputs(report.c_str(), stdout);
}

inline void do_simulate(const CommonOpts& c, const std::string& policy,
                        int years, int reps, const std::string& command) {
  const Timer timer;
  const SystemParams sys = resolve(c);
  const PolicySpec spec = make_spec(policy, sys, c.seed);
  const SimOptions opt{years, reps, 10, c.seed, c.seed};
  const SimReport rep = simulate(spec, sys, opt);

  FileSet files{c.out, {}};
  files.write("simulation_groups.csv", groups_csv(rep));
  files.write("simulation_total.csv", total_csv(rep));
  write_manifest(files, command, c, sys, timer.seconds());
  std::printf("policy=%s cost=%.10g (+/- %.3g) infection_rate=%.4g%%\n",
              policy.c_str(), rep.total_cost, rep.total_half_width,
              100.0 * rep.infection_rate);
}

inline void do_compare(const CommonOpts& c, int years, int reps,
                       const std::string& command) {
  const Timer timer;
  const SystemParams sys = resolve(c);
  const std::vector<std::string> names = {"current", "threshold", "optimal"};
  std::vector<PolicySpec> specs;
  for (const std::string& n : names) specs.push_back(make_spec(n, sys, c.seed));
  const SimOptions opt{years, reps, 10, c.seed, c.seed};
  const std::vector<SimReport> reports = compare(specs, sys, opt);

  std::string csv =
      "policy,total_cost,total_half_width,infection_rate,rate_half_width,"
      "alpha_rate\n";
  char line[256];
  for (std::size_t i = 0; i < names.size(); ++i) {
    const SimReport& r = reports[i];
    std::snprintf(line, sizeof(line), "%s,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  names[i].c_str(), r.total_cost, r.total_half_width,
                  r.infection_rate, r.rate_half_width, r.alpha_rate);
    csv += line;
    std::printf("%s", line);
  }
  FileSet files{c.out, {}};
  files.write("comparison.csv", csv);
  write_manifest(files, command, c, sys, timer.seconds());
}

inline void do_calibrate(const CommonOpts& c, double target, int years,
                         int reps, const std::string& command) {
  const Timer timer;
  const SystemParams sys = resolve(c);
  const SimOptions opt{years, reps, 10, c.seed, c.seed};
  const CalibrationResult cal = calibrate_beta(target, sys, 5e-4, opt);

  char line[160];
  std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g,%d\n", target, cal.beta,
                cal.achieved_rate, cal.evaluations);
  FileSet files{c.out, {}};
  files.write("calibration.csv",
              std::string("target,beta,achieved_rate,evaluations\n") + line);
  write_manifest(files, command, c, sys, timer.seconds());
  std::printf("beta=%.6g achieved_rate=%.6g evaluations=%d\n", cal.beta,
              cal.achieved_rate, cal.evaluations);
}

inline void do_export_map(const CommonOpts& c, const std::string& group,
                          int fixed_x, const std::string& command) {
  const Timer timer;
  const SystemParams sys = resolve(c);
  const GroupId id = parse_group_flag(group);
  const auto it = sys.groups.find(id);
  if (it == sys.groups.end())
    throw ValidationError("group " + to_string(id) +
                          " is not in the configuration");
  const GroupParams& gp = it->second;
  if (state_count(gp) > kMaxSolveStates)
    throw ValidationError(
        "group " + to_string(id) + " has " + std::to_string(state_count(gp)) +
        " states, above the solver cap of " + std::to_string(kMaxSolveStates) +
        "; rerun with --preset desk or tighten the state bounds");

  const ClinicModel cm = build_clinic_model(sys, sys.clinic, c.seed);
  const GroupMdp m(id, sys, cm);
  std::vector<double> gamma(static_cast<std::size_t>(m.num_states()), 0.0);
  gamma[static_cast<std::size_t>(m.index(clamped_initial(sys, id)))] = 1.0;
  const CgResult cg = column_generation(m, gamma, sys.discount);
  const Policy pol = make_policy(m, cg.greedy);

  const int fx =
      fixed_x >= 0
          ? fixed_x
          : std::min(pol.max_new(),
                     static_cast<int>(std::lround(gp.arrival_rate)));
  const RegionMap map = export_region_map(pol, id, fx);

  char name[48];
  std::snprintf(name, sizeof(name), "region_map_%d_%d.csv", id.salary,
                id.risk);
  FileSet files{c.out, {}};
  files.write(name, region_map_csv(map));
  write_manifest(files, command, c, sys, timer.seconds());
  std::printf("wrote %s (fixed x=%d)\n", files.written.back().c_str(), fx);
}

}  // namespace cli_detail

inline int run_main(int argc, const char* const* argv) {
  using namespace cli_detail;
  std::string command;
  for (int i = 0; i < argc; ++i) {
    if (i) command += ' ';
    command += argv[i];
  }

  CLI::App app{"tuberculosis screening policy toolkit"};
  app.require_subcommand(1);

  auto* s_solve = app.add_subcommand(
      "solve", "compute an optimal testing policy for every group");
  CommonOpts c_solve;
  add_common(s_solve, c_solve);
  bool verify = false;
  s_solve->add_flag("--verify-exact", verify,
                    "cross-check against exact value iteration");
  s_solve->callback([&] { do_solve(c_solve, verify, command); });

  auto* s_sim = app.add_subcommand("simulate", "evaluate one policy");
  CommonOpts c_sim;
  add_common(s_sim, c_sim);
  std::string policy = "current";
  int sim_years = 100, sim_reps = 30;
  s_sim->add_option("--policy", policy, "which policy to simulate")
      ->check(CLI::IsMember({"current", "optimal", "threshold"}));
  s_sim->add_option("--years", sim_years, "tallied horizon");
  s_sim->add_option("--reps", sim_reps, "replications");
  s_sim->callback(
      [&] { do_simulate(c_sim, policy, sim_years, sim_reps, command); });

  auto* s_cmp = app.add_subcommand(
      "compare", "simulate current, threshold, and optimal policies");
  CommonOpts c_cmp;
  add_common(s_cmp, c_cmp);
  int cmp_years = 100, cmp_reps = 30;
  s_cmp->add_option("--years", cmp_years, "tallied horizon");
  s_cmp->add_option("--reps", cmp_reps, "replications");
  s_cmp->callback([&] { do_compare(c_cmp, cmp_years, cmp_reps, command); });

  auto* s_cal = app.add_subcommand(
      "calibrate", "fit the mixing coefficient to a target infection rate");
  CommonOpts c_cal;
  add_common(s_cal, c_cal);
  double target = 0.02;
  int cal_years = 100, cal_reps = 30;
  s_cal->add_option("--target", target, "yearly infection rate to match")
      ->required();
  s_cal->add_option("--years", cal_years, "tallied horizon per evaluation");
  s_cal->add_option("--reps", cal_reps, "replications per evaluation");
  s_cal->callback(
      [&] { do_calibrate(c_cal, target, cal_years, cal_reps, command); });

  auto* s_map = app.add_subcommand(
      "export-map", "export one group's policy as a (y,u) action grid");
  CommonOpts c_map;
  add_common(s_map, c_map);
  std::string group;
  int fixed_x = -1;
  s_map->add_option("--group", group, "group as 'salary,risk'")->required();
  s_map->add_option("--fixed-x", fixed_x,
                    "new-arrival slice; default round(lambda)");
  s_map->callback([&] { do_export_map(c_map, group, fixed_x, command); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("tbscreen");
  for (const std::string& a : args) full.push_back(a);
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& s : full) argv.push_back(s.c_str());
  return run_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace tbs
