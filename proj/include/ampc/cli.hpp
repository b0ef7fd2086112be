#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ampc/ampc.hpp"
#include "ampc/outputs.hpp"
#include "ampc/scenario.hpp"
#include "ampc/simlab.hpp"

namespace ampc::cli {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitConfig = 2, kExitFailure = 3 };

#ifdef AMPC_LAB_SOURCE_DIR
inline const char* kSourceDir = AMPC_LAB_SOURCE_DIR;
#else
inline const char* kSourceDir = ".";
#endif

/// A scenario path as given, else looked up under the shipped scenarios/.
inline std::string resolve_scenario(const std::string& path) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::exists(path)) return path;
  const fs::path shipped = fs::path(kSourceDir) / "scenarios" / path;
  if (fs::exists(shipped)) return shipped.string();
  throw ConfigError("scenario file not found: " + path);
}

/// "N" means seeds 1..N; "a,b,c" a list; "a:b" an inclusive range.
inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  try {
    if (const auto colon = text.find(':'); colon != std::string::npos) {
      const auto a = std::stoull(text.substr(0, colon)), b = std::stoull(text.substr(colon + 1));
      if (b < a) throw ConfigError("empty seed range: " + text);
      for (auto s = a; s <= b; ++s) seeds.push_back(s);
    } else if (text.find(',') != std::string::npos) {
      std::stringstream ss(text);
      std::string part;
      while (std::getline(ss, part, ',')) seeds.push_back(std::stoull(part));
    } else {
      const auto n = std::stoull(text);
      for (std::uint64_t s = 1; s <= n; ++s) seeds.push_back(s);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad --seeds value: " + text);
  }
  if (seeds.empty()) throw ConfigError("--seeds selects no seeds");
  auto sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("--seeds must be distinct");
  return seeds;
}

inline std::vector<std::string> modes_for(const std::string& mode, const Scenario& s) {
  if (mode.empty()) return {s.mode};
  if (mode == "both") return {"ampc", "baseline"};
  return {mode};
}

inline std::string summary_line(const EpisodeResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "seed=%llu mode=%s success=%d sustained=%d mean_speed=%.4f mean_height=%.4f final_mass_error=%.4f "
                "distance=%.3f",
                static_cast<unsigned long long>(r.seed), r.mode.c_str(), r.success ? 1 : 0, r.sustained ? 1 : 0,
                r.mean_speed, r.mean_height, r.final_mass_error, r.distance);
  std::string s = buf;
  if (!r.success && std::isfinite(r.fall_time)) {
    std::snprintf(buf, sizeof buf, " fall_time=%.3f", r.fall_time);
    s += buf;
  }
  if (!r.diagnostics.empty()) s += " error=\"" + r.diagnostics + "\"";
  return s;
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  auto out = detail::open_out(path);
  out << j.dump(2) << "\n";
  detail::finish(out, path);
}

/// Runs fn(i) for i in [0, n) on up to `parallelism` workers.
template <class F>
void parallel_for(int n, int parallelism, F&& fn) {
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < n; i = next++) fn(i);
  };
  const int workers = effective_parallelism(parallelism, n);
  if (workers <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

struct SweepPoint {
  std::string mode;
  double payload = 0.0;
  EpisodeResult result;
};

struct SweepResult {
  std::vector<SweepPoint> points;   // ordered by mode, then payload
  std::vector<std::pair<std::string, double>> max_sustained;   // NaN when none
};

inline std::vector<double> payload_grid(double from, double to, double step) {
  if (!(step > 0.0) || to < from) throw ConfigError("sweep needs step > 0 and to >= from");
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((to - from) / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(from + i * step);
  return g;
}

/// One static payload per grid mass; the capacity of a mode is the largest
/// mass up to which every grid point is sustained.
inline SweepResult sweep_payload(const Scenario& tmpl, const std::vector<std::string>& modes,
                                 const std::vector<double>& masses, int parallelism,
                                 const std::function<EpisodeOptions(const SweepPoint&)>& options_for = {}) {
  SweepResult out;
  for (const auto& m : modes) {
    for (double kg : masses) out.points.push_back({m, kg, {}});
  }
  parallel_for(static_cast<int>(out.points.size()), parallelism, [&](int i) {
    SweepPoint& pt = out.points[i];
    Scenario s = tmpl;
    s.mode = pt.mode;
    s.payloads.clear();
    if (pt.payload > 0.0) {
      PayloadEvent p;
      p.mass = pt.payload;
      s.payloads.push_back(p);
    }
    EpisodeOptions opt = options_for ? options_for(pt) : EpisodeOptions{};
    opt.keep_telemetry = false;
    try {
      pt.result = run_episode(s, opt).result;
    } catch (const std::exception& e) {
      pt.result.mode = pt.mode;
      pt.result.seed = s.seed;
      pt.result.diagnostics = e.what();
    }
  });
  for (const auto& m : modes) {
    double best = std::nan("");
    for (const auto& pt : out.points) {
      if (pt.mode != m) continue;
      if (!pt.result.sustained) break;
      best = pt.payload;
    }
    out.max_sustained.emplace_back(m, best);
  }
  return out;
}

/// sweep.csv (one row per episode) and max_payload.csv (one row per mode).
inline void write_sweep_outputs(const SweepResult& r, const std::string& dir) {
  const auto base = std::filesystem::path(dir);
  {
    const std::string path = (base / "sweep.csv").string();
    auto f = detail::open_out(path);
    f << "payload," << result_row_csv_header() << "\n";
    for (const auto& pt : r.points) f << detail::num(pt.payload) << "," << result_row_csv(pt.result) << "\n";
    detail::finish(f, path);
  }
  const std::string path = (base / "max_payload.csv").string();
  auto f = detail::open_out(path);
  f << "mode,max_sustained_payload\n";
  for (const auto& [m, kg] : r.max_sustained) f << m << "," << detail::num(kg) << "\n";
  detail::finish(f, path);
}

struct QpBench {
  int samples = 0;
  int variables = 0;
  int constraints = 0;
  double p50 = 0.0, p90 = 0.0, p99 = 0.0, max = 0.0, mean = 0.0;   // seconds
};

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

/// Cold-start solve time of the standing problem at the nominal pose.
inline QpBench bench_standing_qp(const Scenario& s, int samples) {
  if (samples < 1) throw ConfigError("--samples must be >= 1");
  const MpcConfig cfg = s.effective_controller();
  RigidBodyState body;
  body.position = Vec3(0.0, 0.0, s.robot.height);
  FootSet feet;
  for (int j = 0; j < kNumFeet; ++j) feet.positions[j] = Vec3(s.robot.foot_offsets[j].x(), s.robot.foot_offsets[j].y(), 0.0);
  std::array<Vec3, kNumFeet> arms;
  for (int j = 0; j < kNumFeet; ++j) arms[j] = feet.positions[j] - body.position;
  const Eigen::VectorXd theta = theta_from_params(s.robot.params());
  GaitConfig standing = s.gait;
  standing.duty = 1.0;
  const ContactSchedule schedule = contact_schedule(0.0, standing, cfg.horizon, cfg.sample_time);
  const Vec3 anchor(0.0, 0.0, s.robot.height);
  const StateVector x0 = to_local_frame(body, 0.0, anchor);
  const OperatingPoint op = OperatingPoint::make(body.rotation, body.omega, feedforward_input(theta, schedule.now, cfg),
                                                 arms, schedule.now);
  const HStack stack = build_h_stack(op, cfg.sample_time, cfg.gravity_vector());
  Command cmd;
  cmd.height = s.robot.height;
  const Eigen::MatrixXd ref = build_reference(cmd, cfg.horizon, cfg.sample_time, s.robot.height);

  MpcSolver solver;
  QpBench b;
  std::vector<double> times;
  for (int i = 0; i < samples; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const MpcSolution sol = solver.solve(x0, theta, stack, schedule, ref, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    if (!sol.optimal()) throw std::runtime_error("standing problem not solved: " + std::string(qp::to_string(sol.status)));
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    b.variables = sol.diagnostics.num_variables;
    b.constraints = sol.diagnostics.num_constraints;
  }
  b.samples = samples;
  b.p50 = percentile(times, 0.5);
  b.p90 = percentile(times, 0.9);
  b.p99 = percentile(times, 0.99);
  b.max = *std::max_element(times.begin(), times.end());
  double sum = 0.0;
  for (double t : times) sum += t;
  b.mean = sum / samples;
  return b;
}

struct CommonOptions {
  std::string scenario;
  std::string out = "out";
  std::vector<std::string> sets;
  std::string mode;
  std::string terrain;
  bool dry_run = false;
};

inline void add_common(CLI::App* sub, CommonOptions& o, bool with_mode = true) {
  sub->add_option("--scenario", o.scenario, "Scenario JSON (a delta on the shipped defaults)");
  sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  sub->add_option("--set", o.sets, "Override key=value (dotted path; repeatable)")->allow_extra_args(false);
  if (with_mode) {
    sub->add_option("--mode", o.mode, "Controller mode")->check(CLI::IsMember({"ampc", "baseline", "both"}));
  }
  sub->add_option("--terrain", o.terrain, "Terrain kind")->check(CLI::IsMember({"flat", "rough"}));
  sub->add_flag("--dry-run", o.dry_run, "Print the effective config as JSON and exit");
}

inline Scenario load(const CommonOptions& o, nlohmann::json& effective, const std::string& fallback = "") {
  std::vector<std::string> sets;
  if (!o.terrain.empty()) sets.push_back("terrain.kind=" + o.terrain);
  if (!o.mode.empty() && o.mode != "both") sets.push_back("mode=" + o.mode);
  sets.insert(sets.end(), o.sets.begin(), o.sets.end());
  const std::string path = resolve_scenario(o.scenario.empty() ? fallback : o.scenario);
  Scenario s = load_scenario(path, sets, &effective);
  s.validate();
  return s;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Adaptive MPC lab for a single-rigid-body quadruped", "ampc-lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ampc-lab 1.0.0");

  CommonOptions run_o, batch_o, sweep_o, bench_o;
  bool run_strict = false, batch_strict = false;
  auto* run = app.add_subcommand("run", "Run one episode and write telemetry and plots");
  add_common(run, run_o);
  run->add_flag("--strict", run_strict, "Exit 3 when an episode fails");

  std::string seeds_text = "10";
  int batch_parallel = 0;
  auto* batch = app.add_subcommand("batch", "Run one episode per seed and aggregate success over distance");
  add_common(batch, batch_o);
  batch->add_option("--seeds", seeds_text, "Seed count N (1..N), list a,b,c or range a:b")->capture_default_str();
  batch->add_option("--parallel", batch_parallel, "Worker threads (0: hardware; capped by AMPC_LAB_THREADS)");
  batch->add_flag("--strict", batch_strict, "Exit 3 when any episode fails");

  double from = 0.0, to = 18.0, step = 0.5;
  int sweep_parallel = 0;
  auto* sweep = app.add_subcommand("sweep-payload", "Find the largest sustained static payload per mode");
  add_common(sweep, sweep_o);
  sweep->add_option("--from", from, "Smallest payload, kg")->capture_default_str();
  sweep->add_option("--to", to, "Largest payload, kg")->capture_default_str();
  sweep->add_option("--step", step, "Payload step, kg")->capture_default_str();
  sweep->add_option("--parallel", sweep_parallel, "Worker threads (0: hardware; capped by AMPC_LAB_THREADS)");

  int samples = 200;
  auto* bench = app.add_subcommand("bench-qp", "Time the standing MPC problem and report percentiles");
  add_common(bench, bench_o, false);
  bench->add_option("--samples", samples, "Number of timed solves")->capture_default_str();

  std::string telemetry_path, curve_path, plot_out = "out";
  auto* plot = app.add_subcommand("plot", "Regenerate plots from written CSV files");
  plot->add_option("--telemetry", telemetry_path, "Telemetry CSV from run");
  plot->add_option("--curve", curve_path, "success_curve.csv from batch");
  plot->add_option("--out", plot_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) {
      nlohmann::json effective;
      const Scenario base = load(run_o, effective);
      if (run_o.dry_run) {
        out << effective.dump(2) << "\n";
        return kExitOk;
      }
      const auto modes = modes_for(run_o.mode, base);
      bool all_ok = true;
      for (const auto& m : modes) {
        Scenario s = base;
        s.mode = m;
        const std::string dir = modes.size() > 1 ? (std::filesystem::path(run_o.out) / m).string() : run_o.out;
        const EpisodeOutput ep = run_episode(s);
        write_episode_outputs(ep, dir);
        write_json(to_json(s), (std::filesystem::path(dir) / "effective_config.json").string());
        write_results_csv({ep.result}, (std::filesystem::path(dir) / "result.csv").string());
        out << summary_line(ep.result) << "\n";
        all_ok = all_ok && ep.result.success;
      }
      return run_strict && !all_ok ? kExitFailure : kExitOk;
    }

    if (batch->parsed()) {
      nlohmann::json effective;
      const Scenario base = load(batch_o, effective);
      const auto seeds = parse_seeds(seeds_text);
      if (batch_o.dry_run) {
        out << effective.dump(2) << "\n";
        return kExitOk;
      }
      const auto modes = modes_for(batch_o.mode, base);
      std::vector<BatchResult> results;
      bool all_ok = true;
      for (const auto& m : modes) {
        Scenario s = base;
        s.mode = m;
        results.push_back(run_batch(s, seeds, batch_parallel));
        write_results_csv(results.back().episodes,
                          (std::filesystem::path(batch_o.out) / ("results_" + m + ".csv")).string());
        for (const auto& e : results.back().episodes) {
          out << summary_line(e) << "\n";
          all_ok = all_ok && e.success;
        }
      }
      std::vector<std::pair<std::string, const BatchResult*>> labelled;
      for (size_t i = 0; i < modes.size(); ++i) labelled.emplace_back(modes[i], &results[i]);
      write_success_curve_csv(labelled, (std::filesystem::path(batch_o.out) / "success_curve.csv").string());
      svg::write(success_plot(labelled), (std::filesystem::path(batch_o.out) / "success_distance.svg").string());
      write_json(effective, (std::filesystem::path(batch_o.out) / "effective_config.json").string());
      for (size_t i = 0; i < modes.size(); ++i) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "mode=%s episodes=%zu success_rate=%.4f", modes[i].c_str(),
                      results[i].episodes.size(), results[i].overall_success);
        out << buf << "\n";
      }
      return batch_strict && !all_ok ? kExitFailure : kExitOk;
    }

    if (sweep->parsed()) {
      nlohmann::json effective;
      const Scenario base = load(sweep_o, effective, "flat_trot.json");
      const auto masses = payload_grid(from, to, step);
      if (sweep_o.dry_run) {
        out << effective.dump(2) << "\n";
        return kExitOk;
      }
      const auto modes = modes_for(sweep_o.mode, base);
      const SweepResult r = sweep_payload(base, modes, masses, sweep_parallel);
      const auto dir = std::filesystem::path(sweep_o.out);
      write_sweep_outputs(r, dir.string());
      for (const auto& pt : r.points) {
        out << "payload=" << detail::num(pt.payload) << " " << summary_line(pt.result) << "\n";
      }
      for (const auto& [m, kg] : r.max_sustained) {
        out << "mode=" << m << " max_sustained_payload=" << detail::num(kg) << "\n";
      }
      write_json(effective, (dir / "effective_config.json").string());
      return kExitOk;
    }

    if (bench->parsed()) {
      nlohmann::json effective;
      const Scenario base = load(bench_o, effective);
      if (bench_o.dry_run) {
        out << effective.dump(2) << "\n";
        return kExitOk;
      }
      const QpBench b = bench_standing_qp(base, samples);
      const std::string path = (std::filesystem::path(bench_o.out) / "bench_qp.csv").string();
      auto f = detail::open_out(path);
      f << "samples,variables,constraints,p50_ms,p90_ms,p99_ms,max_ms,mean_ms\n";
      f << b.samples << "," << b.variables << "," << b.constraints << "," << detail::num(1e3 * b.p50) << ","
        << detail::num(1e3 * b.p90) << "," << detail::num(1e3 * b.p99) << "," << detail::num(1e3 * b.max) << ","
        << detail::num(1e3 * b.mean) << "\n";
      detail::finish(f, path);
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "samples=%d variables=%d constraints=%d p50_ms=%.4f p90_ms=%.4f p99_ms=%.4f max_ms=%.4f",
                    b.samples, b.variables, b.constraints, 1e3 * b.p50, 1e3 * b.p90, 1e3 * b.p99, 1e3 * b.max);
      out << buf << "\n";
      return kExitOk;
    }

    if (plot->parsed()) {
      if (telemetry_path.empty() && curve_path.empty()) throw ConfigError("plot needs --telemetry or --curve");
      const auto dir = std::filesystem::path(plot_out);
      if (!telemetry_path.empty()) {
        if (!std::filesystem::exists(telemetry_path)) throw ConfigError("telemetry file not found: " + telemetry_path);
        const auto rows = read_telemetry_csv(telemetry_path);
        svg::write(speed_height_plot(rows), (dir / "speed_height.svg").string());
        svg::write(grf_plot(rows, 0), (dir / "grf.svg").string());
        svg::write(mass_plot(rows), (dir / "mass.svg").string());
        out << "plots written to " << dir.string() << "\n";
      }
      if (!curve_path.empty()) {
        if (!std::filesystem::exists(curve_path)) throw ConfigError("curve file not found: " + curve_path);
        std::vector<std::string> header;
        const auto data = read_numeric_csv(curve_path, &header);
        std::vector<BatchResult> curves(header.size() > 0 ? header.size() - 1 : 0);
        for (const auto& row : data) {
          for (size_t c = 0; c < curves.size() && c + 1 < row.size(); ++c) {
            curves[c].distance_grid.push_back(row[0]);
            curves[c].success_rate.push_back(row[c + 1]);
          }
        }
        std::vector<std::pair<std::string, const BatchResult*>> labelled;
        for (size_t c = 0; c < curves.size(); ++c) {
          std::string label = header[c + 1];
          if (label.rfind("success_", 0) == 0) label = label.substr(8);
          labelled.emplace_back(label, &curves[c]);
        }
        std::filesystem::create_directories(dir);
        svg::write(success_plot(labelled), (dir / "success_distance.svg").string());
        out << "success plot written to " << dir.string() << "\n";
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}

}  // namespace ampc::cli
