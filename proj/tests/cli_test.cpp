#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run synth(const std::string& args, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / "passynth_cli_output.txt";
  const std::string cmd = env + " " + SYNTH_BINARY + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log);
  return r;
}

std::string data(const std::string& name) { return std::string(SYNTH_DATA_DIR) + "/" + name; }

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("passynth_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Cli, CheckPass) {
  const auto r = synth("check --plant " + data("two_state.json") + " --gain=-0.5,0");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  EXPECT_NE(r.out.find("P ="), std::string::npos);
}

TEST(Cli, CheckFailAtOptimalGain) {
  const auto r = synth("check --plant " + data("two_state.json") + " --gain 0.048363,0.142954");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("best lambda_max"), std::string::npos);
}

TEST(Cli, ParseErrors) {
  const auto bad = synth("check --plant " + data("malformed_rows.json") + " --gain 0,0");
  EXPECT_EQ(bad.code, 2) << bad.out;
  EXPECT_NE(bad.out.find("field 'A' row 1"), std::string::npos) << bad.out;

  EXPECT_EQ(synth("check --gain 0,0").code, 2);
  EXPECT_EQ(synth("no-such-command").code, 2);
  EXPECT_EQ(synth("check --plant " + data("two_state.json") + " --gain 1,2,3").code, 2);
  EXPECT_EQ(synth("explore --plant " + data("two_state.json") + " --box 1..0,0..1").code, 2);
}

TEST(Cli, FindGain) {
  const auto r = synth("find-gain --plant " + data("two_state.json"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("FOUND"), std::string::npos);
}

TEST(Cli, StagesStandalone) {
  const auto dir = fresh_dir("stages");
  const std::string plant = " --plant " + data("two_state.json");
  auto r = synth("explore" + plant + " --seed-gain=-0.8,0.4 --edge 0.4 --box=-4..0,-2..2 --out " +
                 dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_TRUE(fs::exists(dir / "atlas.csv"));
  r = synth("approx" + plant + " --atlas " + (dir / "atlas.csv").string() + " --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_TRUE(fs::exists(dir / "polytope.csv"));
  r = synth("optimize" + plant + " --polytope " + (dir / "polytope.csv").string() +
            " --start=-0.4,0.6 --start=-0.55,2.0 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "trajectory_0.csv"));
  EXPECT_TRUE(fs::exists(dir / "trajectory_1.csv"));
  EXPECT_NE(r.out.find("Converged"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, PipelineWithPlot) {
  const auto dir = fresh_dir("pipeline");
  const auto r = synth("pipeline --plant " + data("two_state.json") +
                       " --box=-4..0,-2..2 --seed 3 --plot --no-raster --resolution 41 --out " +
                       dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("upper bound"), std::string::npos);
  const auto ledger = nlohmann::json::parse(slurp(dir / "ledger.json"));
  EXPECT_EQ(ledger["status"], "ok");
  EXPECT_GE(ledger["f_K_hat"].get<double>(), ledger["f_K_star"].get<double>());
  for (const char* key : {"plant", "atlas", "polytope"}) {
    EXPECT_TRUE(fs::exists(dir / ledger["artifacts"][key].get<std::string>())) << key;
  }
  EXPECT_TRUE(fs::exists(dir / "figure.svg"));

  const auto replot = synth("plot --ledger " + (dir / "ledger.json").string() +
                            " --no-raster --resolution 21 --output " + (dir / "again.svg").string());
  EXPECT_EQ(replot.code, 0) << replot.out;
  EXPECT_TRUE(fs::exists(dir / "again.svg"));
  fs::remove_all(dir);
}

TEST(Cli, LedgerHashIndependentOfThreads) {
  const auto d1 = fresh_dir("hash1");
  const auto d2 = fresh_dir("hash2");
  const std::string args = "pipeline --plant " + data("two_state.json") + " --box=-4..0,-2..2 --seed 9";
  ASSERT_EQ(synth(args + " --out " + d1.string(), "SYNTH_THREADS=1").code, 0);
  ASSERT_EQ(synth(args + " --out " + d2.string(), "SYNTH_THREADS=4").code, 0);
  const auto l1 = nlohmann::json::parse(slurp(d1 / "ledger.json"));
  const auto l2 = nlohmann::json::parse(slurp(d2 / "ledger.json"));
  EXPECT_EQ(l1["result_hash"], l2["result_hash"]);
  EXPECT_EQ(l1["config_hash"], l2["config_hash"]);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Cli, PipelineShortCircuit) {
  const auto dir = fresh_dir("passive");
  const auto r = synth("pipeline --plant " + data("passive_open_loop.json") + " --out " + dir.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("already passivating"), std::string::npos);
  const auto ledger = nlohmann::json::parse(slurp(dir / "ledger.json"));
  EXPECT_TRUE(ledger["short_circuit"].get<bool>());
  EXPECT_EQ(ledger["f_K_hat"], ledger["f_K_star"]);
  fs::remove_all(dir);
}

TEST(Cli, PipelineAbortReportsStage) {
  const auto dir = fresh_dir("abort");
  const auto r = synth("pipeline --plant " + data("two_state.json") +
                       " --seed-gain=-0.05,0.4 --box=-4..0,-2..2 --out " + dir.string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("stage 'explore'"), std::string::npos) << r.out;
  const auto ledger = nlohmann::json::parse(slurp(dir / "ledger.json"));
  EXPECT_EQ(ledger["failed_stage"], "explore");
  EXPECT_TRUE(fs::exists(dir / "plant.json"));
  fs::remove_all(dir);
}

TEST(Cli, PlotDimensionUnsupported) {
  const auto dir = fresh_dir("plot3");
  fs::create_directories(dir);
  fs::copy_file(data("three_state.json"), dir / "plant.json");
  std::ofstream(dir / "ledger.json") << R"({"artifacts": {"plant": "plant.json", "trajectories": []}})";
  const auto r = synth("plot --ledger " + (dir / "ledger.json").string());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("DimensionUnsupported"), std::string::npos) << r.out;
  fs::remove_all(dir);
}

}  // namespace
