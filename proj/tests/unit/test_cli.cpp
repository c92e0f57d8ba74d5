#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tmerr/cli.hpp"
#include "tmerr/errors.hpp"

using namespace tmerr;
using namespace tmerr::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tmerr_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "config.txt";
  std::ofstream(p, std::ios::binary) << body;
  return p;
}

std::string small_run(const fs::path& out) {
  return "# machine smoke run\n"
         "problem.name = simple_machine\n"
         "problem.x_star = 3\n"
         "algorithm.name = iterative\n"
         "algorithm.loss = nmc\n"
         "algorithm.s = 64\n"
         "algorithm.max_iterations = 15\n"
         "algorithm.delta = 0\n"
         "posterior.S = 500\n"
         "seed = 9\n"
         "output.dir = \"" + out.string() + "\"\n";
}

// Drop the last column (wall time) of every trace row.
std::string strip_wall(const std::string& trace) {
  std::istringstream is(trace);
  std::string line, out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST_CASE("key value parsing") {
  const auto kv = parse_key_values("# c\n\n a = 1 \nb=\"x y\"\n  # indented comment\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "x y");
  CHECK_THROWS_AS(parse_key_values("a=1\na=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("=3\n"), ConfigError);
}

TEST_CASE("config defaults and validation") {
  const ExperimentConfig d = parse_config("");
  CHECK(d.problem == ProblemKind::Affine);
  CHECK(d.x_star == Vector{1.0, 3.0});
  CHECK(d.solver.s == 1000);
  CHECK(d.S == 10000);
  CHECK(parse_config("problem.name = simple_machine\n").x_star == Vector{10.0});

  const std::string text = "algorithm.name = iterative_mod\nalgorithm.L_mod = 7\nalgorithm.N_mod = 3\nseed = 4\n";
  CHECK(parse_config(text) == parse_config(text));
  CHECK_FALSE(parse_config(text) == parse_config("seed = 4\n"));
  const ExperimentConfig m = parse_config(text);
  CHECK(m.solver.algorithm == Algorithm::IterativeMod);
  CHECK(m.solver.L_mod == 7);
  CHECK(m.solver.seed == 4);

  for (const char* bad : {"unknown.key = 1\n", "algorithm.s = 0\n", "algorithm.loss = mean\n",
                          "problem.noise_level = -1\n", "problem.name = cube\n", "algorithm.name = annealing\n",
                          "problem.x_star = 1\n", "problem.x_star = 20, 3\n", "optimizer.step_size = 0\n",
                          "algorithm.s = abc\n", "optimizer.init = zero\n", "oracle.resolution = 10\n",
                          "problem.prior_lo = 5,5\nproblem.prior_hi = 1,1\n", "algorithm.N_mod = 0\n"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
  }
}

TEST_CASE("problem construction") {
  InverseProblem p = build_problem(parse_config("problem.name = simple_machine\nproblem.x_star = 3\n"));
  CHECK(p.dim() == 1);
  CHECK(p.obs.y(0, 0) == doctest::Approx(60.0 / 13.0));
  CHECK(p.ledger_snapshot().g_plus == 0);
}

TEST_CASE("run writes its artifacts reproducibly") {
  const fs::path base = scratch("run");
  const fs::path a = base / "a", b = base / "b";
  std::ostringstream out, err;
  REQUIRE(cmd_run(write_config(base, small_run(a)).string(), out, err) == kExitOk);
  for (const char* f : {"config_echo.txt", "trace.csv", "map.txt", "samples.csv", "summary.csv", "cost.csv",
                        "report.txt"})
    CHECK(fs::exists(a / f));
  CHECK(fs::exists(a / "checkpoints" / "map_000015.txt"));
  CHECK(slurp(a / "config_echo.txt") == small_run(a));
  CHECK(slurp(a / "report.txt").find("cost_check: ok") != std::string::npos);
  const std::string trace = slurp(a / "trace.csv");
  CHECK(trace.rfind("iter,loss,g_plus,g_minus,wall_ms\n", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 16);

  const fs::path cb = base / "b_cfg";
  fs::create_directories(cb);
  std::string cfg_b = small_run(b);
  REQUIRE(cmd_run(write_config(cb, cfg_b).string(), out, err) == kExitOk);
  for (const char* f : {"map.txt", "samples.csv", "summary.csv", "cost.csv"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(strip_wall(trace) == strip_wall(slurp(b / "trace.csv")));

  std::ostringstream rep, rerr;
  CHECK(cmd_cost_report({(a / "trace.csv").string(), (b / "trace.csv").string()}, rep, rerr) == kExitOk);
  const std::string r = rep.str();
  CHECK(std::count(r.begin(), r.end(), '\n') == 3);
  CHECK(r.find("MISMATCH") == std::string::npos);
  CHECK(r.find(",ok\n") != std::string::npos);
  fs::remove_all(base);
}

TEST_CASE("exit codes") {
  const fs::path base = scratch("codes");
  std::ostringstream out, err;
  CHECK(cmd_run((base / "missing.txt").string(), out, err) == kExitConfig);
  CHECK(cmd_run(write_config(base, "algorithm.s = -3\n").string(), out, err) == kExitConfig);
  CHECK_FALSE(err.str().empty());

  const std::string blowup = small_run(base / "num") + "optimizer.step_size = 1e300\n";
  std::ostringstream e2;
  CHECK(cmd_run(write_config(base, blowup).string(), out, e2) == kExitNumeric);
  CHECK(fs::exists(base / "num" / "trace.csv"));

  std::ostringstream rep;
  CHECK(cmd_cost_report({}, rep, err) == kExitOk);
  CHECK(rep.str() ==
        "file,algorithm,N,s,s_bank,L_mod,N_mod,g_plus,g_plus_expected,g_plus_formula,g_minus,g_minus_expected,"
        "g_minus_formula,S,status\n");
  std::ofstream(base / "bad.csv") << "nonsense\n";
  std::ostringstream rep2;
  CHECK(cmd_cost_report({(base / "bad.csv").string()}, rep2, err) == kExitConfig);
  fs::remove_all(base);
}

TEST_CASE("OUTPUT_DIR overrides the configured directory") {
  const fs::path base = scratch("env");
  const fs::path target = base / "from_env";
  ::setenv("OUTPUT_DIR", target.string().c_str(), 1);
  CHECK(resolve_output_dir("ignored") == target.string());
  std::ostringstream out, err;
  const int code = cmd_run(write_config(base, small_run(base / "from_cfg")).string(), out, err);
  ::unsetenv("OUTPUT_DIR");
  CHECK(code == kExitOk);
  CHECK(fs::exists(target / "trace.csv"));
  CHECK_FALSE(fs::exists(base / "from_cfg"));
  CHECK(resolve_output_dir("fallback") == "fallback");
  fs::remove_all(base);
}

TEST_CASE("oracle and bias-demo commands") {
  const fs::path base = scratch("oracle");
  std::ostringstream out, err;
  const std::string cfg = "problem.name = simple_machine\nproblem.x_star = 3\noracle.resolution = 64\n"
                          "output.dir = " + (base / "o").string() + "\n";
  REQUIRE(cmd_oracle(write_config(base, cfg).string(), out, err) == kExitOk);
  for (const char* f : {"grid_exact.csv", "grid_reduced.csv", "grid_fixed_point.csv", "oracle_summary.csv"})
    CHECK(fs::exists(base / "o" / f));

  BiasDemoConfig bc;
  bc.s = 100;
  bc.runs = 3;
  bc.w_grid = {-1, 1, 5};
  REQUIRE(cmd_bias_demo(bc, (base / "b").string(), out, err) == kExitOk);
  const std::string csv = slurp(base / "b" / "bias_demo.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(fs::exists(base / "b" / "bias_summary.txt"));
  bc.runs = 0;
  CHECK(cmd_bias_demo(bc, (base / "b").string(), out, err) == kExitConfig);
  fs::remove_all(base);
}

TEST_CASE("end-to-end runs against the grid oracle") {
  const fs::path base = scratch("e2e");
  std::ostringstream out, err;
  const std::string full = "problem.name = affine\nalgorithm.name = full\nalgorithm.s = 500\n"
                           "algorithm.max_iterations = 4000\nalgorithm.delta = 0\noptimizer.step_size = 0.01\n"
                           "oracle.cross_check = true\noutput.dir = " + (base / "full").string() + "\n";
  REQUIRE(cmd_run(write_config(base, full).string(), out, err) == kExitOk);
  const std::string rep = slurp(base / "full" / "report.txt");
  const auto pos = rep.find("cross_check_max_mean_diff: ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(rep.substr(pos + 27)) <= 0.1);

  const std::string many = "problem.name = simple_machine\nproblem.x_star = 10\nproblem.d = 500\n"
                           "algorithm.name = iterative\nalgorithm.loss = nmc\nalgorithm.max_iterations = 3000\n"
                           "algorithm.min_iterations = 1500\noptimizer.step_size = 0.01\noutput.dir = " +
                           (base / "many").string() + "\n";
  REQUIRE(cmd_run(write_config(base, many).string(), out, err) == kExitOk);
  const std::string r2 = slurp(base / "many" / "report.txt");
  const auto p2 = r2.find("mean_1: ");
  REQUIRE(p2 != std::string::npos);
  CHECK(std::abs(std::stod(r2.substr(p2 + 8)) - 10.0) <= 0.2);
  fs::remove_all(base);
}

TEST_CASE("mcmc and grid runs report exact evaluation counts") {
  const fs::path base = scratch("mcmc");
  std::ostringstream out, err;
  const std::string mcmc = "problem.name = simple_machine\nproblem.x_star = 1\nalgorithm.name = oracle_mcmc\n"
                           "oracle.target = exact\noracle.mh_samples = 3000\noracle.mh_burn = 100\n"
                           "oracle.proposal_std = 4\noutput.dir = " + (base / "m").string() + "\n";
  REQUIRE(cmd_run(write_config(base, mcmc).string(), out, err) == kExitOk);
  const std::string rep = slurp(base / "m" / "report.txt");
  CHECK(rep.find("cost_check: ok") != std::string::npos);
  CHECK(rep.find("proposals_outside: 0\n") == std::string::npos);

  const fs::path gdir = base / "g_cfg";
  fs::create_directories(gdir);
  const std::string grid = "problem.name = simple_machine\nalgorithm.name = oracle_grid\noracle.target = reduced\n"
                           "posterior.S = 300\noutput.dir = " + (base / "g").string() + "\n";
  REQUIRE(cmd_run(write_config(gdir, grid).string(), out, err) == kExitOk);
  const std::string samples = slurp(base / "g" / "samples.csv");
  CHECK(std::count(samples.begin(), samples.end(), '\n') == 301);

  std::ostringstream table;
  CHECK(cmd_cost_report({(base / "m" / "trace.csv").string(), (base / "g" / "trace.csv").string()}, table, err) ==
        kExitOk);
  const std::string t = table.str();
  CHECK(t.find("MISMATCH") == std::string::npos);
  CHECK(t.find("oracle_mcmc") != std::string::npos);
  CHECK(t.find(",3000,ok\n") != std::string::npos);
  CHECK(t.find(",300,ok\n") != std::string::npos);
  fs::remove_all(base);
}
