#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lattice_bsde/cli.hpp"
#include "support.hpp"

using namespace lattice_bsde;
namespace fs = std::filesystem;

namespace {

std::string config_file(const std::string& name) { return std::string(LATTICE_BSDE_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lattice_bsde_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run_cli(const std::vector<std::string>& args, const std::string& sub = "a") {
    std::vector<std::string> full = args;
    full.push_back("--out");
    full.push_back((dir_ / sub).string());
    return run(full, err_);
  }
  Json summary(const std::string& sub = "a") { return Json::parse(slurp(dir_ / sub / "summary.json")); }

  fs::path dir_;
  std::ostringstream err_;
};

// A config written next to the outputs.
fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_F(Cli, BinomialSolve) {
  ASSERT_EQ(run_cli({"solve", "--config", config_file("binomial.json")}), 0) << err_.str();
  const Json s = summary();
  EXPECT_EQ(s["engine"], "lattice");
  EXPECT_NEAR(s["Y0"].get<double>(), 0.5, 1e-15);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "lattice.csv"));
}

TEST_F(Cli, ZeroDriverIsThePathAverage) {
  ASSERT_EQ(run_cli({"solve", "--config", config_file("zero_variance.json")}), 0) << err_.str();
  const Json s = summary();
  EXPECT_EQ(s["engine"], "tree");
  // Each unit step contributes 2/3 to the first asset's squared increments.
  EXPECT_NEAR(s["Y0"].get<double>(), 5.0 * 2.0 / 3.0 - 2.0, 1e-12);
  const RunConfig cfg = load_config(config_file("zero_variance.json"));
  const ScenarioTree tree(*cfg.basis, cfg.horizon);
  std::ifstream in(dir_ / "a" / "solution.csv");
  const Solution sol = read_solution_csv(in, tree);
  double mean = 0.0;
  for (double y : sol.Y.at(5)) mean += y;
  EXPECT_NEAR(s["Y0"].get<double>(), mean / static_cast<double>(tree.leaves()), 1e-12);
}

TEST_F(Cli, RepeatedRunsAreByteIdentical) {
  for (const char* name : {"robust", "invest", "check"}) {
    const std::string cfg = config_file(std::string(name) + ".json");
    ASSERT_EQ(run_cli({name, "--config", cfg}, "one"), 0) << err_.str();
    ASSERT_EQ(run_cli({name, "--config", cfg, "--threads", "3"}, "two"), 0) << err_.str();
    EXPECT_EQ(slurp(dir_ / "one" / "summary.json"), slurp(dir_ / "two" / "summary.json")) << name;
  }
}

TEST_F(Cli, RobustValue) {
  ASSERT_EQ(run_cli({"robust", "--config", config_file("robust.json")}), 0) << err_.str();
  const Json s = summary();
  EXPECT_NEAR(s["value"].get<double>(), 0.4096, 1e-12);
  EXPECT_TRUE(s["certified"].get<bool>());
  EXPECT_TRUE(fs::exists(dir_ / "a" / "measure.csv"));
}

TEST_F(Cli, Equilibrium) {
  ASSERT_EQ(run_cli({"equilibrium", "--config", config_file("equilibrium.json")}), 0) << err_.str();
  EXPECT_TRUE(summary()["in_equilibrium"].get<bool>());
  ASSERT_EQ(run_cli({"equilibrium", "--config", config_file("equilibrium_belief.json")}, "b"), 0) << err_.str();
  EXPECT_LT(summary("b")["radon_nikodym_gap"].get<double>(), 1e-9);
}

TEST_F(Cli, CheckPasses) {
  ASSERT_EQ(run_cli({"check", "--config", config_file("check.json")}), 0) << err_.str();
  EXPECT_TRUE(summary()["passed"].get<bool>());
}

TEST_F(Cli, MissingHorizonExitsTwo) {
  EXPECT_EQ(run_cli({"solve", "--config", config_file("missing_horizon.json")}), 2);
  EXPECT_NE(err_.str().find("$.horizon: missing required field"), std::string::npos);
}

TEST_F(Cli, TreeTooLargeExitsTwo) {
  const fs::path cfg = write_config(dir_ / "in", R"({"basis": {"vectors": [[1.0, 0.0], [0.0, 1.0]]}, "horizon": 30,
      "engine": "tree", "driver": {"kind": "zero"}, "payoff": {"kind": "linear", "weights": [1, 1]}})");
  EXPECT_EQ(run_cli({"solve", "--config", cfg.string()}), 2);
  EXPECT_NE(err_.str().find("TreeTooLarge"), std::string::npos);
}

TEST_F(Cli, LatticeEngineNeedsMarkovInputs) {
  const fs::path cfg = write_config(dir_ / "in", R"({"basis": {"vectors": [[1.0]]}, "horizon": 3, "engine": "lattice",
      "driver": {"kind": "zero"}, "payoff": {"kind": "table", "values": [1, 2, 3, 4, 5, 6, 7, 8]}})");
  EXPECT_EQ(run_cli({"solve", "--config", cfg.string()}), 2);
  EXPECT_NE(err_.str().find("$.engine"), std::string::npos);
}

TEST_F(Cli, NumericalFailureExitsThree) {
  const fs::path cfg = write_config(dir_ / "in", R"({"basis": {"vectors": [[1.0]]}, "horizon": 1,
      "driver": {"kind": "linear", "slope": [0.5]}, "payoff": {"kind": "linear", "weights": [1]}})");
  EXPECT_EQ(run_cli({"invest", "--config", cfg.string()}), 3);
  EXPECT_NE(err_.str().find("NoArgmax"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({"solve"}, err_), 2);
  EXPECT_EQ(run({"--config", config_file("binomial.json")}, err_), 2);
  EXPECT_EQ(run({"solve", "--config", config_file("binomial.json"), "--threads", "0"}, err_), 2);
  EXPECT_EQ(run({"solve", "--config", "/nonexistent/config.json", "--out", dir_.string()}, err_), 2);
}

TEST_F(Cli, LatticeAndTreeEnginesAgree) {
  const std::string body = R"("basis": {"vectors": [[1.0, 0.0], [0.0, 1.0]]}, "horizon": 6,
      "driver": {"kind": "entropic", "belief": [0.2, 0.3, 0.5], "risk_aversion": 1.2},
      "payoff": {"kind": "call", "weights": [1, 0.5], "strike": 0.2})";
  const fs::path lat = write_config(dir_ / "lat", "{" + body + ", \"engine\": \"lattice\"}");
  const fs::path tree = write_config(dir_ / "tree", "{" + body + ", \"engine\": \"tree\"}");
  ASSERT_EQ(run_cli({"solve", "--config", lat.string()}, "x"), 0) << err_.str();
  ASSERT_EQ(run_cli({"solve", "--config", tree.string()}, "y"), 0) << err_.str();
  EXPECT_NEAR(summary("x")["Y0"].get<double>(), summary("y")["Y0"].get<double>(), 1e-12);
}
