#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

// End-to-end checks of the dthsem binary. The path comes from the build via
// the DTHSEM_BIN environment variable.

namespace {

std::string binary_path() {
  const char* p = std::getenv("DTHSEM_BIN");
  REQUIRE_MESSAGE(p != nullptr, "DTHSEM_BIN must point at the dthsem binary");
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file = "/tmp/dthsem_test_stdout.txt";
  const std::string err_file = "/tmp/dthsem_test_stderr.txt";
  const std::string cmd = binary_path() + " " + args + " >" + out_file + " 2>" + err_file;
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(rc);
  auto slurp = [](const std::string& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) {
    if (c == '\n') ++n;
  }
  return n;
}

std::string slurp_file(const std::string& path) {
  std::ifstream f(path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("smoke run: harmonic, 100 steps, 100 data rows") {
  const RunResult r = run_cli("--system harmonic --q0 1 --p0 0 --prho0 -0.49 --steps 100");
  CHECK(r.exit_code == 0);
  CHECK(count_lines(r.out) == 101);  // header + 100 rows
  CHECK(r.out.rfind("k,t,q1,p1,prho,lambda,mu,branch,H_mid,psi_mid\n", 0) == 0);
}

TEST_CASE("identical runs produce byte-identical CSV") {
  const std::string args =
      "--system pendulum --q0 0 --p0 3 --steps 150 --output /tmp/dthsem_det_a.csv";
  const std::string args2 =
      "--system pendulum --q0 0 --p0 3 --steps 150 --output /tmp/dthsem_det_b.csv";
  CHECK(run_cli(args).exit_code == 0);
  CHECK(run_cli(args2).exit_code == 0);
  CHECK(slurp_file("/tmp/dthsem_det_a.csv") == slurp_file("/tmp/dthsem_det_b.csv"));
  CHECK(slurp_file("/tmp/dthsem_det_a.csv.events.csv") ==
        slurp_file("/tmp/dthsem_det_b.csv.events.csv"));
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("--q0 0 --p0 3 --steps 10").exit_code == 2);  // missing --system
  CHECK(run_cli("--system pendulum --q0 0 0 --p0 3 --steps 10").exit_code == 2);  // dim
  CHECK(run_cli("--system pendulum --q0 0 --p0 x --steps 10").exit_code == 2);  // non-numeric
  CHECK(run_cli("--system pendulum --q0 0 --p0 3 --unknown-flag 1").exit_code == 2);
}

TEST_CASE("solver failures exit with code 3 and a machine-readable record") {
  // H(z0) < 0 with psi > 0 admits no first step
  const RunResult r =
      run_cli("--system harmonic --q0 1 --p0 0 --prho0 -0.51 --steps 10");
  CHECK(r.exit_code == 3);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j.contains("error"));
  CHECK(j["error"]["kind"] == "solver");
  CHECK(j["error"]["steps_completed"] == 0);
}

TEST_CASE("rotation run emits crossing events; events file is written") {
  const RunResult r = run_cli(
      "--system pendulum --q0 0 --p0 3 --steps 2000 --output /tmp/dthsem_rot.csv");
  CHECK(r.exit_code == 0);
  const std::string events = slurp_file("/tmp/dthsem_rot.csv.events.csv");
  CHECK(events.rfind("k,event\n", 0) == 0);
  CHECK(events.find("CrossingDetected") != std::string::npos);
  CHECK(events.find("RegularizedBranch") != std::string::npos);
  const std::string table = slurp_file("/tmp/dthsem_rot.csv");
  CHECK(count_lines(table) == 2001);
  CHECK(table.find("Regularized") != std::string::npos);
}

TEST_CASE("near-separatrix configuration runs") {
  const RunResult r = run_cli(
      "--system pendulum --q0 0 --p0 2.2 --steps 2000 --output /tmp/dthsem_sep.csv");
  CHECK(r.exit_code == 0);
  CHECK(count_lines(slurp_file("/tmp/dthsem_sep.csv")) == 2001);
  // lambda-vs-mu data for the crossing steps is all in the table
  CHECK(slurp_file("/tmp/dthsem_sep.csv").find("Regularized") != std::string::npos);
}

TEST_CASE("json format carries spec, steps, events and diagnostics") {
  const RunResult r = run_cli(
      "--system kepler --q0 1 0 --p0 0 1 --steps 1000 --format json --diag-conservation");
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["spec"]["system"] == "kepler");
  CHECK(j["spec"]["mode"] == "auto");
  CHECK(j["steps"].size() == 1000);
  const auto& s0 = j["steps"][0];
  for (const char* field : {"k", "z_start", "z_end", "z_mid", "lambda", "mu", "branch",
                            "H_mid", "psi_mid"}) {
    CHECK(s0.contains(field));
  }
  CHECK(j.contains("events"));
  const auto& cons = j["diagnostics"]["conservation"];
  CHECK(cons["max_abs_H_mid"].get<double>() <= 1e-12);
  bool found_l = false;
  for (const auto& o : cons["observables"]) {
    if (o["name"] == "L") {
      found_l = true;
      CHECK(o["max_rel_drift"].get<double>() <= 1e-10);
    }
  }
  CHECK(found_l);
}

TEST_CASE("config file values are overridden by flags") {
  {
    std::ofstream f("/tmp/dthsem_cfg.ini");
    f << "system=harmonic\n"
      << "q0=1\n"
      << "p0=0\n"
      << "prho0=-0.49\n"
      << "steps=50\n";
  }
  const RunResult base = run_cli("--config /tmp/dthsem_cfg.ini");
  CHECK(base.exit_code == 0);
  CHECK(count_lines(base.out) == 51);
  const RunResult overridden = run_cli("--config /tmp/dthsem_cfg.ini --steps 7");
  CHECK(overridden.exit_code == 0);
  CHECK(count_lines(overridden.out) == 8);
  // unknown config keys are usage errors naming the offender
  {
    std::ofstream f("/tmp/dthsem_cfg_bad.ini");
    f << "system=harmonic\nq0=1\np0=0\nsteps=5\nbogus_key=1\n";
  }
  const RunResult bad = run_cli("--config /tmp/dthsem_cfg_bad.ini");
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("bogus_key") != std::string::npos);
}

TEST_CASE("symplectic and reverse diagnostics are reported") {
  const RunResult r = run_cli(
      "--system pendulum --q0 0 --p0 3 --prho0 -3.45 --steps 100 --format json "
      "--diag-symplectic --diag-reverse");
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["diagnostics"]["symplecticity_defect"].get<double>() <= 1e-5);
  CHECK(j["diagnostics"]["reversibility_error"].get<double>() <= 1e-8);
}

TEST_CASE("unwritable output path exits with code 4") {
  const RunResult r = run_cli(
      "--system harmonic --q0 1 --p0 0 --prho0 -0.49 --steps 5 --output "
      "/nonexistent-dir/out.csv");
  CHECK(r.exit_code == 4);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j["error"]["kind"] == "io");
}

TEST_CASE("force-ghost mode is selectable and logs the ghost branch") {
  const RunResult r = run_cli(
      "--system pendulum --q0 0 --p0 3 --steps 18 --mode force-ghost --output "
      "/tmp/dthsem_ghost.csv");
  CHECK(r.exit_code == 0);
  CHECK(slurp_file("/tmp/dthsem_ghost.csv.events.csv").find("GhostBranch") != std::string::npos);
}
