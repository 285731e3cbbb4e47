#include "tbscreen/cli.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tbscreen/model.hpp"
#include "tbscreen/version.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tbscreen_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Single tiny group: 3 x 4 x 3 states, solvable in milliseconds.
fs::path write_tiny_config(const fs::path& dir) {
  tbs::SystemParams defaults = tbs::paper_defaults();
  tbs::SystemParams sys;
  tbs::GroupParams gp = defaults.groups.at({2, 2});
  gp.arrival_rate = 1.0;
  gp.leave_prob = 0.5;
  gp.max_new = 2;
  gp.max_ongoing = 3;
  gp.max_undetected = 2;
  sys.groups[{2, 2}] = gp;
  sys.beta = defaults.beta;
  const fs::path p = dir / "tiny.json";
  std::ofstream out(p, std::ios::binary);
  out << tbs::serialize(sys);
  return p;
}

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("help exits zero") {
  CHECK(tbs::run({"--help"}) == 0);
  CHECK(tbs::run({"solve", "--help"}) == 0);
  CHECK(tbs::run({"simulate", "--help"}) == 0);
}

TEST_CASE("usage mistakes exit two") {
  CHECK(tbs::run({"frobnicate"}) == 2);
  CHECK(tbs::run({"solve", "--bogus-flag"}) == 2);
  CHECK(tbs::run({}) == 2);  // a subcommand is required
  CHECK(tbs::run({"simulate", "--policy", "nonsense"}) == 2);
}

TEST_CASE("config failures exit one") {
  const fs::path dir = fresh_dir("bad_config");

  SECTION("missing file") {
    CHECK(tbs::run({"solve", "--config", (dir / "absent.json").string()}) == 1);
  }
  SECTION("malformed json") {
    const fs::path p = dir / "broken.json";
    std::ofstream(p) << "{ this is not json";
    CHECK(tbs::run({"solve", "--config", p.string()}) == 1);
  }
  SECTION("invalid content") {
    const fs::path p = dir / "empty.json";
    std::ofstream(p) << "{}";
    CHECK(tbs::run({"solve", "--config", p.string()}) == 1);
  }
  SECTION("full-scale state space is refused with advice") {
    // Built-in parameters without the desk preset are far beyond the cap.
    CHECK(tbs::run({"solve", "--out", (dir / "o").string()}) == 1);
  }
}

TEST_CASE("solve writes policy, report, and manifest") {
  const fs::path dir = fresh_dir("solve");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "out";

  REQUIRE(tbs::run({"solve", "--config", cfg.string(), "--out", out.string(),
                    "--seed", "3", "--verify-exact"}) == 0);

  const std::string report = read_file(out / "solve_report.txt");
  CHECK(report.find("objective") != std::string::npos);
  CHECK(report.find("exact") != std::string::npos);

  const std::string policy = read_file(out / "policy_2_2.csv");
  CHECK(policy.rfind("x,y,u,action\n", 0) == 0);
  CHECK(line_count(policy) == 1 + 3 * 4 * 3);

  const auto manifest =
      nlohmann::json::parse(read_file(out / "manifest.json"));
  CHECK(manifest.at("command").get<std::string>().find("solve") !=
        std::string::npos);
  CHECK(manifest.at("config").get<std::string>() == cfg.string());
  CHECK(manifest.at("seed").get<std::uint64_t>() == 3);
  CHECK(manifest.at("version").get<std::string>() == tbs::kVersion);
  CHECK(manifest.at("param_hash").get<std::string>().size() == 16);
  CHECK(manifest.at("wall_time_seconds").get<double>() >= 0.0);
  bool lists_policy = false;
  for (const auto& o : manifest.at("outputs"))
    if (o.get<std::string>().find("policy_2_2.csv") != std::string::npos)
      lists_policy = true;
  CHECK(lists_policy);
}

TEST_CASE("identical solve runs hash identically") {
  const fs::path dir = fresh_dir("solve_hash");
  const fs::path cfg = write_tiny_config(dir);
  REQUIRE(tbs::run({"solve", "--config", cfg.string(), "--out",
                    (dir / "a").string(), "--seed", "3"}) == 0);
  REQUIRE(tbs::run({"solve", "--config", cfg.string(), "--out",
                    (dir / "b").string(), "--seed", "3"}) == 0);
  CHECK(read_file(dir / "a" / "policy_2_2.csv") ==
        read_file(dir / "b" / "policy_2_2.csv"));
  const auto ma = nlohmann::json::parse(read_file(dir / "a" / "manifest.json"));
  const auto mb = nlohmann::json::parse(read_file(dir / "b" / "manifest.json"));
  CHECK(ma.at("param_hash") == mb.at("param_hash"));
}

TEST_CASE("simulate runs each policy kind end to end") {
  const fs::path dir = fresh_dir("simulate");
  const fs::path cfg = write_tiny_config(dir);

  for (const std::string policy : {"current", "threshold", "optimal"}) {
    const fs::path out = dir / policy;
    REQUIRE(tbs::run({"simulate", "--config", cfg.string(), "--policy", policy,
                      "--years", "6", "--reps", "3", "--seed", "5", "--out",
                      out.string()}) == 0);
    const std::string groups = read_file(out / "simulation_groups.csv");
    CHECK(groups.rfind("salary,risk,", 0) == 0);
    CHECK(line_count(groups) == 1 + 1);  // header + one group
    const std::string total = read_file(out / "simulation_total.csv");
    CHECK(total.rfind("total_cost,", 0) == 0);
    CHECK(line_count(total) == 2);
  }
}

TEST_CASE("compare emits three policy rows deterministically") {
  const fs::path dir = fresh_dir("compare");
  const fs::path cfg = write_tiny_config(dir);

  const std::vector<std::string> tail = {"--config", cfg.string(), "--years",
                                         "6",        "--reps",     "3",
                                         "--seed",   "9"};
  std::vector<std::string> run_a = {"compare", "--out", (dir / "a").string()};
  std::vector<std::string> run_b = {"compare", "--out", (dir / "b").string()};
  run_a.insert(run_a.end(), tail.begin(), tail.end());
  run_b.insert(run_b.end(), tail.begin(), tail.end());
  REQUIRE(tbs::run(run_a) == 0);
  REQUIRE(tbs::run(run_b) == 0);

  const std::string csv = read_file(dir / "a" / "comparison.csv");
  CHECK(csv.rfind("policy,", 0) == 0);
  CHECK(line_count(csv) == 1 + 3);
  CHECK(csv.find("current") != std::string::npos);
  CHECK(csv.find("threshold") != std::string::npos);
  CHECK(csv.find("optimal") != std::string::npos);
  CHECK(csv == read_file(dir / "b" / "comparison.csv"));
}

TEST_CASE("calibrate writes its result") {
  const fs::path dir = fresh_dir("calibrate");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "out";
  REQUIRE(tbs::run({"calibrate", "--config", cfg.string(), "--target", "0",
                    "--years", "12", "--reps", "2", "--seed", "2", "--out",
                    out.string()}) == 0);
  const std::string csv = read_file(out / "calibration.csv");
  CHECK(csv.rfind("target,beta,achieved_rate,evaluations\n", 0) == 0);
  CHECK(csv.find("\n0,0,0,") != std::string::npos);
}

TEST_CASE("export map slices the solved policy") {
  const fs::path dir = fresh_dir("export_map");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "out";

  REQUIRE(tbs::run({"export-map", "--config", cfg.string(), "--group", "2,2",
                    "--seed", "3", "--out", out.string()}) == 0);
  const std::string csv = read_file(out / "region_map_2_2.csv");
  CHECK(csv.rfind("y,u,action\n", 0) == 0);
  CHECK(line_count(csv) == 1 + 4 * 3);  // (my+1) x (mu+1) rows

  CHECK(tbs::run({"export-map", "--config", cfg.string(), "--group", "9,9",
                  "--out", out.string()}) == 1);
  CHECK(tbs::run({"export-map", "--config", cfg.string(), "--group", "abc",
                  "--out", out.string()}) == 1);
}
