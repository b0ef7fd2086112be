#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ampc/outputs.hpp"
#include "ampc/simlab.hpp"
#include "oracles.hpp"

using namespace ampc;
namespace fs = std::filesystem;

namespace {

Scenario scenario(const std::string& name, const std::vector<std::string>& overrides = {}) {
  return load_scenario(std::string(AMPC_LAB_SOURCE_DIR) + "/scenarios/" + name, overrides);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ampc_simlab_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Episode, StandingHoldsHeight) {
  const auto ep = run_episode(scenario("standing.json"));
  EXPECT_TRUE(ep.result.success);
  EXPECT_NEAR(ep.result.mean_height, 0.26, 0.005);
  EXPECT_NEAR(ep.result.mean_speed, 0.0, 0.01);
  EXPECT_EQ(ep.result.infeasible_ticks, 0);
  EXPECT_EQ(static_cast<int>(ep.telemetry.size()), ep.result.ticks);
}

TEST(Episode, TracksSpeedWithPayload) {
  const auto ep = run_episode(scenario("flat_6p5kg.json"));
  EXPECT_TRUE(ep.result.success);
  EXPECT_NEAR(ep.result.mean_speed, 0.5, 0.05);
  EXPECT_NEAR(ep.result.mean_height, 0.26, 0.02);
  EXPECT_LT(ep.result.final_mass_error, 0.05);
}

TEST(Episode, BaselineFailsWithHeavyPayload) {
  Scenario s = scenario("flat_10kg.json");
  s.mode = "baseline";
  const auto ep = run_episode(s);
  EXPECT_FALSE(ep.result.sustained);
  EXPECT_EQ(ep.result.mode, "baseline");
  // Its estimate never moves from the nominal mass.
  for (const auto& r : ep.telemetry) EXPECT_NEAR(r.mass_hat, 12.45, 1e-9);
}

TEST(Episode, AppliedForcesRespectContact) {
  const Scenario s = scenario("flat_6p5kg.json");
  const auto ep = run_episode(s);
  ASSERT_FALSE(ep.telemetry.empty());
  for (const auto& r : ep.telemetry) {
    if (r.qp_status != 0) continue;
    EXPECT_LT(oracle::contact_violation(r.u0, r.stance, s.controller.mu), 1e-8) << r.tick;
    EXPECT_LE(r.grf_violation, 1e-8);
  }
}

TEST(Episode, LinearMomentumBalance) {
  // Between ticks the momentum change is the force impulse under the hold.
  Scenario s = scenario("push.json");
  const auto ep = run_episode(s);
  const double ts = s.controller.sample_time;
  for (size_t k = 0; k + 1 < ep.telemetry.size(); ++k) {
    const auto& a = ep.telemetry[k];
    const auto& b = ep.telemetry[k + 1];
    if (b.event == kEventPayload) continue;
    Vec3 f = -a.mass_true * s.controller.gravity_vector() + a.push_force;
    for (int j = 0; j < 4; ++j) f += a.u0.segment<3>(3 * j);
    const bool push_edge = (b.push_force - a.push_force).norm() > 0.0;
    if (push_edge) continue;
    const Vec3 dp = a.mass_true * (b.velocity - a.velocity);
    EXPECT_LT((dp - ts * f).norm(), 1e-6) << k;
  }
}

TEST(Episode, DynamicPayloadChangesPlant) {
  const auto ep = run_episode(scenario("dynamic_payload.json"));
  int events = 0;
  double last = 0.0;
  for (const auto& r : ep.telemetry) {
    if (r.event == kEventPayload) {
      ++events;
      EXPECT_GT(r.mass_true, last);
    }
    last = r.mass_true;
  }
  EXPECT_EQ(events, 2);
  EXPECT_NEAR(ep.telemetry.front().mass_true, 18.95, 1e-12);
  EXPECT_NEAR(ep.telemetry.back().mass_true, 21.45, 1e-12);
}

TEST(Episode, Deterministic) {
  const Scenario s = scenario("flat_6p5kg.json", {"duration=3"});
  const auto a = run_episode(s), b = run_episode(s);
  ASSERT_EQ(a.telemetry.size(), b.telemetry.size());
  for (size_t k = 0; k < a.telemetry.size(); ++k) {
    ASSERT_EQ(telemetry_row_csv(a.telemetry[k]), telemetry_row_csv(b.telemetry[k]));
  }
}

TEST(Episode, RejectsInvalidScenario) {
  Scenario s;
  s.mode = "other";
  EXPECT_THROW(run_episode(s), ConfigError);
}

TEST(Batch, FlatSeedsAllSucceedAndMatchAcrossWorkers) {
  const Scenario s = scenario("flat_trot.json", {"duration=4"});
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t k = 1; k <= 10; ++k) seeds.push_back(k);
  const auto one = run_batch(s, seeds, 1);
  const auto four = run_batch(s, seeds, 4);
  EXPECT_DOUBLE_EQ(one.overall_success, 1.0);
  ASSERT_EQ(one.episodes.size(), 10u);
  for (size_t k = 0; k < seeds.size(); ++k) {
    EXPECT_EQ(one.episodes[k].seed, seeds[k]);
    EXPECT_EQ(result_row_csv(one.episodes[k]), result_row_csv(four.episodes[k]));
  }
  const fs::path dir = scratch("batch");
  write_results_csv(one.episodes, (dir / "a.csv").string());
  write_results_csv(four.episodes, (dir / "b.csv").string());
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  fs::remove_all(dir);
}

TEST(Batch, DistinctSeedsRequired) {
  EXPECT_THROW(run_batch(Scenario{}, {1, 2, 1}, 1), std::invalid_argument);
}

TEST(Batch, SuccessCurve) {
  std::vector<EpisodeResult> eps(4);
  eps[0].success = true;
  eps[0].distance = 10.0;
  eps[1].distance = 2.2;
  eps[2].distance = 6.0;
  eps[3].distance = 0.0;
  const auto grid = distance_grid(10.0, 2.0);
  ASSERT_EQ(grid.size(), 6u);
  const auto rate = success_curve(eps, grid, 10.0);
  const std::vector<double> expect{1.0, 0.75, 0.5, 0.5, 0.25, 0.25};
  for (size_t k = 0; k < rate.size(); ++k) EXPECT_DOUBLE_EQ(rate[k], expect[k]);
  for (size_t k = 1; k < rate.size(); ++k) EXPECT_LE(rate[k], rate[k - 1]);
}

TEST(Outputs, EmptyTelemetryWritesHeaderOnly) {
  const fs::path dir = scratch("empty");
  const std::string path = (dir / "t.csv").string();
  write_telemetry_csv({}, path);
  std::vector<std::string> header;
  const auto rows = read_numeric_csv(path, &header);
  EXPECT_TRUE(rows.empty());
  EXPECT_EQ(header, telemetry_columns());
  EXPECT_TRUE(fs::exists(path + ".meta.json"));
  fs::remove_all(dir);
}

TEST(Outputs, TelemetryRoundTrip) {
  const auto ep = run_episode(scenario("push.json", {"duration=3.5"}));
  const fs::path dir = scratch("roundtrip");
  const auto art = write_episode_outputs(ep, dir.string());
  const auto back = read_telemetry_csv(art.telemetry);
  ASSERT_EQ(back.size(), ep.telemetry.size());
  for (size_t k = 0; k < back.size(); ++k) {
    ASSERT_EQ(telemetry_row_csv(back[k]), telemetry_row_csv(ep.telemetry[k])) << k;
  }
  for (const auto& f : {art.speed_height, art.grf, art.mass, art.success_distance, art.terrain}) {
    EXPECT_GT(fs::file_size(f), 100u) << f;
  }
  const std::string mass_svg = slurp(art.mass);
  EXPECT_NE(mass_svg.find("push"), std::string::npos);
  EXPECT_NE(mass_svg.find("true mass"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Svg, PaddedRange) {
  const auto r = svg::padded_range(0.0, 10.0);
  EXPECT_DOUBLE_EQ(r.lo, -0.5);
  EXPECT_DOUBLE_EQ(r.hi, 10.5);
  const auto flat = svg::padded_range(3.0, 3.0);
  EXPECT_LT(flat.lo, 3.0);
  EXPECT_GT(flat.hi, 3.0);
}

TEST(Svg, MarkersRendered) {
  std::vector<TelemetryRow> rows(3);
  for (int k = 0; k < 3; ++k) {
    rows[k].time = 0.1 * k;
    rows[k].mass_hat = 12.0 + k;
    rows[k].mass_true = 14.0;
  }
  rows[1].event = kEventPayload;
  const auto plot = mass_plot(rows);
  ASSERT_EQ(plot.markers.size(), 1u);
  EXPECT_DOUBLE_EQ(plot.markers[0].x, 0.1);
  const std::string doc = svg::render(plot);
  EXPECT_EQ(doc.rfind("<?xml", 0), 0u);
  EXPECT_NE(doc.find("payload"), std::string::npos);
  EXPECT_NE(doc.find("stroke-dasharray"), std::string::npos);
}

TEST(Svg, UnwritablePathThrows) {
  const fs::path dir = scratch("unwritable");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  svg::Plot p;
  EXPECT_THROW(svg::write(p, (dir / "file" / "plot.svg").string()), std::runtime_error);
  fs::remove_all(dir);
}
