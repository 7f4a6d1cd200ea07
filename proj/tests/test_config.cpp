#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "hdmix/config.hpp"
#include "hdmix/errors.hpp"
#include "hdmix/runner.hpp"

using namespace hdmix;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> errors_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errs, const std::string& needle) {
  for (const auto& e : errs) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hdmix_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kSmall = R"(
command = solve
[mesh]
nx = 3
ny = 3
[material]
beta = 1
eta = 0.5
omega = 1
[contact]
g = 0.1
[time]
T = 1
N = 4
)";

}  // namespace

TEST_CASE("commands") {
  CHECK(parse_command("study-convergence") == Command::StudyConvergence);
  CHECK_FALSE(parse_command("bogus").has_value());
  CHECK(std::string(command_name(Command::DemoContact)) == "demo-contact");
}

TEST_CASE("defaults and sections") {
  const RunConfig c = parse_config("command = verify\n# comment\n[material]\nbeta = 2 # trailing\neta=0.25\n");
  CHECK(c.command == Command::Verify);
  CHECK(c.material.beta == 2.0);
  CHECK(c.material.eta == 0.25);
  CHECK(c.nx == 8);
  CHECK(c.g == doctest::Approx(0.1));
  CHECK(c.grid().steps == 20);
  CHECK(c.schedule == std::vector<int>{1, 2, 4, 8, 16, 32});
}

TEST_CASE("dotted keys, suffix keys and vectors") {
  const RunConfig c = parse_config(
      "command = optimize\nmesh.nx = 5\nbeta = 1.5\nloads.body = 0.5, -2\nstudy.schedule = 1, 3, 9\n"
      "optimize.budget = 50\nsolver.rho = auto\ntime.N = 10\n");
  CHECK(c.nx == 5);
  CHECK(c.material.beta == 1.5);
  CHECK(c.body.y() == -2.0);
  CHECK(c.schedule == std::vector<int>{1, 3, 9});
  CHECK(c.budget == 50);
  CHECK_FALSE(c.uzawa.rho.has_value());
  bool found = false;
  for (const auto& [k, v] : c.echo) found = found || k == "material.beta";
  CHECK(found);
}

TEST_CASE("every error is reported with its line") {
  const auto errs = errors_of("command = solve\nfoo = 1\nmaterial.beta = -1\nmaterial.beta = 2\nnot a pair\n"
                              "time.N = x\n[broken\n");
  CHECK(errs.size() >= 5);
  CHECK(mentions(errs, "line 2: unknown key `foo`"));
  CHECK(mentions(errs, "line 3:"));
  CHECK(mentions(errs, "duplicate key `material.beta`"));
  CHECK(mentions(errs, "line 5: expected `key = value`"));
  CHECK(mentions(errs, "line 6:"));
  CHECK(mentions(errs, "line 7: malformed section header"));
}

TEST_CASE("semantic checks") {
  CHECK(mentions(errors_of("mesh.nx = 4\n"), "missing required key `command`"));
  CHECK(mentions(errors_of("command = launch\n"), "unknown command"));
  CHECK(mentions(errors_of("command = solve\nmaterial.beta = 0\n"), "beta > 0"));
  CHECK(mentions(errors_of("command = solve\nmesh.file = /no/such/mesh.txt\n"), "does not exist"));
  CHECK(mentions(errors_of("command = study-convergence\ntime.N = 10\nstudy.probe_times = 0.33\n"),
                 "study.probe_times"));
  CHECK(mentions(errors_of("command = optimize\noptimize.target = 9, 0.6, 1.5, 1, 0.8, 0.12\n"), "outside"));
  CHECK_FALSE(errors_of("command = solve\nmaterial.eta = -0.5\n").empty());
  CHECK_FALSE(errors_of("command = solve\ncontact.g = -1\n").empty());
  CHECK_FALSE(errors_of("command = solve\nloads.theta = wobble\n").empty());
}

TEST_CASE("mesh file paths resolve against the config directory") {
  const fs::path dir = scratch("meshdir");
  fs::create_directories(dir);
  {
    std::ofstream m(dir / "square.mesh");
    write_mesh(m, generate_rect_mesh(2, 2, 1.0, 1.0));
    std::ofstream c(dir / "run.conf");
    c << "command = solve\nmesh.file = square.mesh\n";
  }
  const RunConfig cfg = load_config(dir / "run.conf");
  CHECK(cfg.build_mesh().nodes.size() == 9);
  CHECK_THROWS_AS(load_config(dir / "missing.conf"), ConfigError);
}

TEST_CASE("solve writes trajectories and a manifest") {
  RunConfig cfg = parse_config(kSmall);
  cfg.out_dir = scratch("solve");
  std::ostringstream log, err;
  REQUIRE(run(cfg, log, err) == kExitOk);
  const std::string u = slurp(cfg.out_dir / "trajectory_u.csv");
  CHECK(u.rfind("t,node_id,ux,uy\n", 0) == 0);
  CHECK(std::count(u.begin(), u.end(), '\n') == 1 + 5 * 16);
  const std::string l = slurp(cfg.out_dir / "trajectory_lambda.csv");
  CHECK(std::count(l.begin(), l.end(), '\n') == 1 + 5 * 3);
  const std::string man = slurp(cfg.out_dir / "manifest.txt");
  CHECK(man.find("m_A_declared = 2") != std::string::npos);
  CHECK(man.find("file = trajectory_u.csv") != std::string::npos);
  CHECK(man.find("material.beta = 1") != std::string::npos);
}

TEST_CASE("runs are reproducible") {
  RunConfig cfg = parse_config(kSmall);
  cfg.out_dir = scratch("repro_a");
  std::ostringstream log, err;
  REQUIRE(run(cfg, log, err) == kExitOk);
  const std::string a = slurp(cfg.out_dir / "trajectory_u.csv");
  cfg.out_dir = scratch("repro_b");
  REQUIRE(run(cfg, log, err) == kExitOk);
  CHECK(slurp(cfg.out_dir / "trajectory_u.csv") == a);
}

TEST_CASE("demo contact, study and verify commands") {
  std::ostringstream log, err;
  RunConfig cfg = parse_config(kSmall);
  cfg.command = Command::DemoContact;
  cfg.out_dir = scratch("demo");
  CHECK(run(cfg, log, err) == kExitOk);
  CHECK(fs::exists(cfg.out_dir / "friction_kkt.csv"));
  CHECK(log.str().find("PASS friction KKT") != std::string::npos);

  cfg.command = Command::StudyConvergence;
  cfg.schedule = {1, 2, 4};
  cfg.out_dir = scratch("study");
  CHECK(run(cfg, log, err) == kExitOk);
  const std::string csv = slurp(cfg.out_dir / "convergence.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2);

  cfg.command = Command::Verify;
  cfg.out_dir = scratch("verify");
  std::ostringstream vlog;
  CHECK(run(cfg, vlog, err) == kExitOk);
  CHECK(vlog.str().find("FAIL") == std::string::npos);
  CHECK(vlog.str().find("PASS patch_test") != std::string::npos);
}

TEST_CASE("optimize command") {
  RunConfig cfg = parse_config(std::string(kSmall) + "[optimize]\nbudget = 40\n");
  cfg.command = Command::Optimize;
  cfg.out_dir = scratch("optimize");
  std::ostringstream log, err;
  CHECK(run(cfg, log, err) == kExitOk);
  const std::string trace = slurp(cfg.out_dir / "optimize_trace.csv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 41);
  CHECK(slurp(cfg.out_dir / "manifest.txt").find("best_cost = ") != std::string::npos);
}

TEST_CASE("solver failures map to the solver exit code") {
  RunConfig cfg = parse_config(kSmall);
  cfg.uzawa.max_iter = 1;
  cfg.uzawa.tol = 1e-15;
  cfg.out_dir = scratch("fail");
  std::ostringstream log, err;
  CHECK(run(cfg, log, err) == kExitSolver);
  CHECK(err.str().find("time node") != std::string::npos);
}
