#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tbudget/commands.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tbudget-cli-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the executable and returns its exit status; stderr goes to dir/stderr.
int run(const std::string& command, const fs::path& dir, const std::string& config, const std::string& extra = "") {
  {
    std::ofstream(dir / "config.json") << config;
  }
  const std::string cmd = std::string(TBUDGET_CLI_PATH) + " " + command + " --config " + (dir / "config.json").string() +
                          " --out " + (dir / "out").string() + " " + extra + " > " + (dir / "stdout").string() +
                          " 2> " + (dir / "stderr").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> rows(const fs::path& p) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    out.push_back(cells);
  }
  return out;
}

}  // namespace

TEST_CASE("plan writes the allocation and footer") {
  const fs::path dir = scratch("plan");
  REQUIRE(run("plan", dir, R"({"family": {"kind": "gaussian"}, "N0": 100,
                               "sources": [{"name": "s1", "delta": 0.1, "cap": 1000}]})") == 0);
  const auto r = rows(dir / "out" / "plan.csv");
  REQUIRE(r.size() == 3);
  CHECK(r[0] == std::vector<std::string>{"source_name", "cap", "alpha_star", "n_star"});
  CHECK(r[1] == std::vector<std::string>{"s1", "1000", "1", "100"});
  CHECK(r[2][0] == "s_star");
  CHECK(r[2][1] == "100");
  CHECK(r[2][2] == "predicted_proxy");
}

TEST_CASE("plan with no sources predicts the target-only proxy") {
  const fs::path dir = scratch("empty");
  REQUIRE(run("plan", dir, R"({"family": {"kind": "gaussian", "dim": 4}, "N0": 50})") == 0);
  const auto r = rows(dir / "out" / "plan.csv");
  REQUIRE(r.size() == 2);
  CHECK(r[1] == std::vector<std::string>{"s_star", "0", "predicted_proxy", "0.04"});
}

TEST_CASE("config errors exit with code 2 and name the field") {
  const fs::path dir = scratch("dup");
  CHECK(run("plan", dir, R"({"family": {"kind": "gaussian"}, "N0": 10,
                             "sources": [{"name": "x", "delta": 0, "cap": 5}, {"name": "x", "delta": 1, "cap": 5}]})") ==
        2);
  CHECK(slurp(dir / "stderr").find("sources[1].name") != std::string::npos);
  CHECK(run("verify", dir, R"({"family": {"kind": "gaussian"}, "N0": 10, "trials": 50,
                               "sources": [{"delta": 0, "cap": 5}]})") == 2);
  CHECK(slurp(dir / "stderr").find("trials") != std::string::npos);
  CHECK(run("plan", dir, R"({"N0": 10})") == 2);
  CHECK(slurp(dir / "stderr").find("family") != std::string::npos);
  CHECK(run("bogus", dir, "{}") == 2);
  CHECK(run("plan", dir, "{}", "--workers 0") == 2);
}

TEST_CASE("curve regimes") {
  const fs::path dir = scratch("curve");
  REQUIRE(run("curve", dir, R"({"N0": 100, "curve": {"t": 0.004, "N1": 1000}})") == 0);
  auto r = rows(dir / "out" / "curve.csv");
  CHECK(r[0] == std::vector<std::string>{"n1", "proxy", "regime"});
  REQUIRE(r.size() == 102);
  for (std::size_t i = 2; i < r.size(); ++i) {
    CHECK(std::stod(r[i][1]) < std::stod(r[i - 1][1]));
    CHECK(r[i][2] == "monotone_decreasing");
  }

  REQUIRE(run("curve", dir, R"({"N0": 100, "family": {"kind": "gaussian"},
                                "sources": [{"delta": 0.1, "cap": 1000}]})") == 0);
  r = rows(dir / "out" / "curve.csv");
  int changes = 0;
  for (std::size_t i = 3; i < r.size(); ++i) {
    const double a = std::stod(r[i - 1][1]) - std::stod(r[i - 2][1]);
    const double b = std::stod(r[i][1]) - std::stod(r[i - 1][1]);
    changes += (a < 0) != (b < 0);
    CHECK(r[i][2] == "interior_minimum");
  }
  CHECK(changes == 1);

  REQUIRE(run("curve", dir, R"({"N0": 100, "curve": {"t": 0.01, "N1": 500, "grid_points": 2}})") == 0);
  r = rows(dir / "out" / "curve.csv");
  REQUIRE(r.size() == 3);
  CHECK(r[1][0] == "0");
  CHECK(r[2][0] == "500");
}

TEST_CASE("verify is reproducible and gates on the threshold") {
  const fs::path dir = scratch("verify");
  const std::string cfg = R"({"seed": 3, "family": {"kind": "gaussian"}, "N0": 50, "trials": 400,
    "sources": [{"delta": 0.2, "cap": 200}], "verify": {"grid_step": 50}})";
  REQUIRE(run("verify", dir, cfg) == 0);
  const std::string first = slurp(dir / "out" / "verify.csv");
  REQUIRE(run("verify", dir, cfg, "--workers 3") == 0);
  CHECK(slurp(dir / "out" / "verify.csv") == first);
  const auto r = rows(dir / "out" / "verify.csv");
  CHECK(r[0] == std::vector<std::string>{"axis_value", "mean_kl", "std_err", "theoretical_proxy", "z_ratio"});
  CHECK(r.size() == 7);
  CHECK(r.back()[0] == "max_z_ratio");

  const std::string strict = R"({"seed": 3, "family": {"kind": "gaussian"}, "N0": 50, "trials": 400,
    "sources": [{"delta": 0.2, "cap": 200}], "verify": {"mode": "points", "n1": [0, 100, 200],
    "threshold": 1e-9}})";
  CHECK(run("verify", dir, strict) == 4);
}

TEST_CASE("train writes run logs and a comparison") {
  const fs::path dir = scratch("train");
  const std::string base = R"({"seed": 5, "sources": [{"name": "a", "delta": 0, "cap": 60},
    {"name": "b", "delta": 1.5, "cap": 60}], "trainer": {"feature_dim": 2, "classes": 3, "test_size": 100,
    "max_epochs": 12, "strategies": )";
  REQUIRE(run("train", dir, base + R"(["TargetOnly"]}})") == 0);
  CHECK(rows(dir / "out" / "comparison.csv").size() == 2);
  CHECK(fs::exists(dir / "out" / "runs" / "TargetOnly-5.csv"));

  REQUIRE(run("train", dir, base + R"(["Dynamic"], "seeds": [7]}})") == 0);
  const auto r = rows(dir / "out" / "runs" / "Dynamic-7.csv");
  CHECK(r[0] == std::vector<std::string>{"epoch", "train_loss", "val_acc", "samples_used", "s_star", "alpha_1",
                                         "alpha_2"});
  REQUIRE(r.size() >= 3);
  CHECK(r[1][4].empty());
  CHECK(r[1][5].empty());
  for (std::size_t i = 2; i < r.size(); ++i) CHECK_FALSE(r[i][4].empty());
  const auto cmp = rows(dir / "out" / "comparison.csv");
  CHECK(cmp[0] == std::vector<std::string>{"suite", "strategy", "mean_test_acc", "std_test_acc", "mean_samples",
                                           "std_samples", "runs"});
  CHECK(cmp[1][1] == "Dynamic");
}

TEST_CASE("run_command maps outcomes to exit codes") {
  const fs::path dir = scratch("codes");
  std::ostringstream log, err;
  CHECK(tbudget::run_command("plan", dir / "missing.json", dir, 1, log, err) == tbudget::kExitConfig);
  {
    std::ofstream(dir / "ok.json") << R"({"family": {"kind": "bernoulli"}, "N0": 20,
                                         "sources": [{"delta": 0.3, "cap": 40}]})";
  }
  CHECK(tbudget::run_command("plan", dir / "ok.json", dir / "out", 2, log, err) == tbudget::kExitOk);
  CHECK(log.str().find("s_star") != std::string::npos);
}
