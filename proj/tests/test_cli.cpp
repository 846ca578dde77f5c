#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

#ifndef ADJOINTLAB_CLI_PATH
#error "ADJOINTLAB_CLI_PATH must be defined by the build"
#endif

const char* kCli = ADJOINTLAB_CLI_PATH;

std::string sandbox() {
  const fs::path dir = fs::temp_directory_path() / "adjointlab_cli_test";
  fs::create_directories(dir);
  return dir.string();
}

int run(const std::string& cmdline) {
  const int status = std::system((cmdline + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_mini_config(const std::string& dir, const std::string& extra = "") {
  const std::string path = dir + "/mini.json";
  std::ofstream out(path);
  out << R"({
    "model_family": "advection_diffusion",
    "hidden_grid": {"n_per_dim": 12, "h": 3.0, "dtau": 0.01},
    "schedule": {"n_obs": 2, "substeps_per_window": 3},
    "wave_grid": {"nz": 48, "nx": 48, "h": 30.0, "dt": 0.003, "nt": 120, "npml": 10},
    "survey": {"sources": [[15, 18]], "receivers": [[17, 14], [17, 20], [17, 26], [17, 32]]},
    "rock_physics": {"m_base": 3000.0, "rho": 1.0},
    "wavelet": {"f0": 8.0, "t0": 0.12},
    "initial_field": {"kind": "blocks", "amplitude": 80.0},
    "params": {"true": {"a": 10.0, "b1": 0.1, "b2": -0.2}},
    "noise_sigma": 0.0,
    "seed": 77,
    "threads": 1,
    "optimizer": {"max_iter": 60},
    "output_dir": ")" << dir << R"(/out")" << extra << "\n}\n";
  return path;
}

}  // namespace

TEST_CASE("cli forward determinism and structure") {
  const std::string dir = sandbox();
  const std::string cfg = write_mini_config(dir);

  REQUIRE(run(std::string(kCli) + " forward --config " + cfg + " --out " + dir + "/a") == 0);
  REQUIRE(run(std::string(kCli) + " forward --config " + cfg + " --out " + dir + "/b") == 0);

  // n_obs phases -> exactly n_obs snapshot files; byte-identical repeats.
  std::vector<std::string> snaps;
  for (const auto& e : fs::directory_iterator(dir + "/a")) {
    const std::string name = e.path().filename().string();
    if (name.rfind("snapshot_", 0) == 0 && name.find(".meta") == std::string::npos) {
      snaps.push_back(name);
    }
  }
  CHECK(snaps.size() == 2);
  for (const auto& e : fs::directory_iterator(dir + "/a")) {
    const fs::path other = fs::path(dir + "/b") / e.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(e.path()) == slurp(other));
  }
}

TEST_CASE("cli outputs are identical across thread counts") {
  const std::string dir = sandbox();
  const std::string cfg = write_mini_config(dir);
  REQUIRE(run(std::string(kCli) + " forward --config " + cfg + " --threads 1 --out " + dir + "/t1") == 0);
  REQUIRE(run(std::string(kCli) + " forward --config " + cfg + " --threads 4 --out " + dir + "/t4") == 0);
  for (const auto& e : fs::directory_iterator(dir + "/t1")) {
    CHECK(slurp(e.path()) == slurp(fs::path(dir + "/t4") / e.path().filename()));
  }
}

TEST_CASE("cli exit codes") {
  const std::string dir = sandbox();

  SUBCASE("missing subcommand or config is a usage error") {
    CHECK(run(std::string(kCli)) == 2);
    CHECK(run(std::string(kCli) + " forward") == 2);
  }

  SUBCASE("CFL violation exits 2 with CFL in the diagnostic") {
    const std::string cfg = write_mini_config(dir);
    std::string text = slurp(cfg);
    text.replace(text.find("\"dt\": 0.003"), 11, "\"dt\": 0.030");
    std::ofstream(dir + "/bad.json") << text;
    const std::string cmd = std::string(kCli) + " forward --config " + dir + "/bad.json 2>" + dir +
                            "/err.txt >/dev/null";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 2);
    CHECK(slurp(dir + "/err.txt").find("CFL") != std::string::npos);
  }

  SUBCASE("unreadable config exits 2") {
    CHECK(run(std::string(kCli) + " invert --config /nonexistent.json") == 2);
  }
}

TEST_CASE("cli invert writes loss history and recovery report") {
  const std::string dir = sandbox();
  const std::string cfg = write_mini_config(dir);
  REQUIRE(run(std::string(kCli) + " invert --config " + cfg + " --out " + dir + "/inv") == 0);

  const std::string loss = slurp(dir + "/inv/loss_history.csv");
  CHECK(loss.rfind("iter,loss,grad_norm\n", 0) == 0);

  // Loss column is non-increasing.
  std::stringstream ss(loss);
  std::string line;
  std::getline(ss, line);
  double prev = 1e300;
  while (std::getline(ss, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    const double v = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    CHECK(v <= prev + 1e-18);
    prev = v;
  }

  const std::string report = slurp(dir + "/inv/recovery_report.csv");
  CHECK(report.rfind("quantity,true,estimate,reported\n", 0) == 0);
  CHECK(report.find("a/a*") != std::string::npos);
}

TEST_CASE("cli invert can read observations produced by forward") {
  const std::string dir = sandbox();
  const std::string cfg = write_mini_config(dir);
  REQUIRE(run(std::string(kCli) + " forward --config " + cfg + " --out " + dir + "/records") == 0);

  std::string text = slurp(cfg);
  text.insert(text.rfind('}'), ",\n  \"observed_dir\": \"" + dir + "/records\"\n");
  std::ofstream(dir + "/from_files.json") << text;
  REQUIRE(run(std::string(kCli) + " invert --config " + dir + "/from_files.json --out " + dir +
              "/inv_files") == 0);
  const std::string report = slurp(dir + "/inv_files/recovery_report.csv");
  CHECK(report.find("a/a*") != std::string::npos);

  // Same data as internal synthesis (sigma = 0), so the same recovery.
  REQUIRE(run(std::string(kCli) + " invert --config " + cfg + " --out " + dir + "/inv_syn") == 0);
  CHECK(slurp(dir + "/inv_files/recovery_report.csv") == slurp(dir + "/inv_syn/recovery_report.csv"));
}

TEST_CASE("cli gradcheck and stability succeed on the mini config") {
  const std::string dir = sandbox();
  const std::string cfg = write_mini_config(dir);
  CHECK(run(std::string(kCli) + " gradcheck --config " + cfg + " --out " + dir + "/gc") == 0);
  const std::string gc = slurp(dir + "/gc/gradcheck.csv");
  CHECK(gc.find("end_to_end") != std::string::npos);
  CHECK(gc.find("ad_step") != std::string::npos);

  CHECK(run(std::string(kCli) + " stability --config " + cfg + " --out " + dir + "/st") == 0);
  const std::string st = slurp(dir + "/st/stability_report.csv");
  CHECK(st.rfind("dt,", 0) == 0);
}
