#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ampc/cli.hpp"

using namespace ampc;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "ampc-lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ampc_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string source(const std::string& rel) { return std::string(AMPC_LAB_SOURCE_DIR) + "/" + rel; }

}  // namespace

TEST(Config, ShippedDefaultsMatchCode) {
  const auto file = read_json_file(source("config/defaults.json"));
  EXPECT_EQ(file, default_config_json());
}

TEST(Config, ShippedScenariosLoad) {
  for (const auto& e : fs::directory_iterator(source("scenarios"))) {
    EXPECT_NO_THROW(load_scenario(e.path().string()).validate()) << e.path();
  }
}

TEST(Config, RoundTrip) {
  const Scenario s = load_scenario(source("scenarios/dynamic_payload.json"));
  EXPECT_EQ(to_json(scenario_from_json(to_json(s))), to_json(s));
}

TEST(Config, UnknownKeyRejected) {
  json j = default_config_json();
  j["controller"]["horizn"] = 7;
  try {
    scenario_from_json(j);
    FAIL() << "accepted an unknown key";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("horizn"), std::string::npos);
    EXPECT_NE(msg.find("horizon"), std::string::npos);
  }
}

TEST(Config, UnknownOverrideListsValidKeys) {
  try {
    load_scenario("", {"controller.horizn=5"});
    FAIL() << "accepted an unknown override";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("controller.horizon"), std::string::npos);
  }
  const Scenario s = load_scenario("", {"controller.horizon=9", "terrain.kind=rough", "command.0.v_des=[0.3,0,0]"});
  EXPECT_EQ(s.controller.horizon, 9);
  EXPECT_EQ(s.terrain.kind, "rough");
  EXPECT_EQ(s.command[0].v_des.x(), 0.3);
}

TEST(Config, SemanticValidation) {
  EXPECT_THROW(load_scenario("", {"duration=-1"}).validate(), ConfigError);
  EXPECT_THROW(load_scenario("", {"controller.mu=-0.1"}).validate(), ConfigError);
  EXPECT_THROW(load_scenario("", {"schema_version=7"}).validate(), ConfigError);
}

TEST(Seeds, Parsing) {
  EXPECT_EQ(cli::parse_seeds("3"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(cli::parse_seeds("5,2,9"), (std::vector<std::uint64_t>{5, 2, 9}));
  EXPECT_EQ(cli::parse_seeds("4:6"), (std::vector<std::uint64_t>{4, 5, 6}));
  EXPECT_THROW(cli::parse_seeds("1,1"), ConfigError);
  EXPECT_THROW(cli::parse_seeds("x"), ConfigError);
  EXPECT_THROW(cli::parse_seeds("0"), ConfigError);
}

TEST(Cli, HelpForEverySubcommand) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  for (const char* sub : {"run", "batch", "sweep-payload", "bench-qp", "plot"}) {
    const CliRun r = invoke({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
  }
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(invoke({}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"run", "--scenario", "no_such_file.json"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"run", "--mode", "fast"}).code, cli::kExitConfig);
  EXPECT_EQ(invoke({"run", "--set", "nope=1", "--dry-run"}).code, cli::kExitConfig);
  const fs::path dir = scratch("strict");
  const CliRun r = invoke({"run", "--scenario", "flat_10kg.json", "--mode", "baseline", "--set", "duration=3", "--out",
                     dir.string(), "--strict"});
  EXPECT_EQ(r.code, cli::kExitFailure) << r.out << r.err;
  fs::remove_all(dir);
}

TEST(Cli, DryRunReloads) {
  const CliRun r = invoke({"run", "--scenario", "rough_6p5kg.json", "--set", "seed=12", "--mode", "baseline", "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json printed = json::parse(r.out);
  const Scenario s = scenario_from_json(printed);
  EXPECT_EQ(s.seed, 12u);
  EXPECT_EQ(s.mode, "baseline");
  EXPECT_EQ(s.terrain.kind, "rough");
  EXPECT_EQ(to_json(s), printed);
}

TEST(Cli, RunWritesArtifacts) {
  const fs::path dir = scratch("run");
  const CliRun r = invoke({"run", "--scenario", "flat_6p5kg.json", "--mode", "both", "--set", "duration=2", "--out",
                     dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* mode : {"ampc", "baseline"}) {
    for (const char* f : {"telemetry.csv", "telemetry.csv.meta.json", "speed_height.svg", "grf.svg", "mass.svg",
                          "success_distance.svg", "effective_config.json", "result.csv"}) {
      EXPECT_TRUE(fs::exists(dir / mode / f)) << mode << "/" << f;
    }
  }
  EXPECT_NE(r.out.find("mode=ampc"), std::string::npos);
  EXPECT_NE(r.out.find("mode=baseline"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, BatchAndPlot) {
  const fs::path dir = scratch("batch");
  const CliRun r = invoke({"batch", "--scenario", "rough_6p5kg.json", "--seeds", "2", "--set", "duration=1.5", "--out",
                     dir.string(), "--mode", "both"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"results_ampc.csv", "results_baseline.csv", "success_curve.csv", "success_distance.svg"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const fs::path replot = dir / "replot";
  const CliRun p = invoke({"plot", "--curve", (dir / "success_curve.csv").string(), "--out", replot.string()});
  EXPECT_EQ(p.code, 0) << p.err;
  EXPECT_TRUE(fs::exists(replot / "success_distance.svg"));
  fs::remove_all(dir);
}

TEST(Cli, BenchWritesPercentiles) {
  const fs::path dir = scratch("bench");
  const CliRun r = invoke({"bench-qp", "--scenario", "standing.json", "--samples", "20", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "bench_qp.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "samples,variables,constraints,p50_ms,p90_ms,p99_ms,max_ms,mean_ms");
  fs::remove_all(dir);
}
