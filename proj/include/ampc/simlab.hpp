#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ampc/adapt.hpp"
#include "ampc/ampc.hpp"
#include "ampc/gait.hpp"
#include "ampc/regressor.hpp"
#include "ampc/scenario.hpp"
#include "ampc/srb.hpp"

namespace ampc {

inline constexpr int kTelemetrySchemaVersion = 1;

enum EventCode : int { kEventNone = 0, kEventPayload = 1, kEventPushStart = 2 };

struct TelemetryRow {
  int tick = 0;
  double time = 0.0;
  Vec3 position, velocity, rpy, omega;
  double ground = 0.0;
  double height = 0.0;                 // COM above the ground reference
  Vec3 v_des;                          // world frame
  double yaw_rate_des = 0.0;
  double height_des = 0.0;
  StateVector x_local;
  InputVector u0;
  StanceFlags stance{};
  StateVector x_pred;                  // one-step prediction for the next tick
  StateVector x_tilde;                 // prediction error of this tick
  Eigen::VectorXd theta_hat;
  double mass_hat = 0.0;
  double mass_true = 0.0;
  double lambda_max = 0.0;
  double stability_margin = 0.0;
  int qp_status = 0;
  int qp_iterations = 0;
  int active_constraints = 0;
  bool fallback = false;
  double grf_violation = 0.0;
  double input_bound = std::numeric_limits<double>::infinity();
  int event = kEventNone;
  Vec3 push_force = Vec3::Zero();
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  std::string mode;
  bool success = false;
  bool sustained = false;              // success and trailing mean height >= sustain_height
  double distance = 0.0;
  double mean_speed = 0.0;
  double mean_height = 0.0;
  double trailing_height = 0.0;
  double fall_time = std::numeric_limits<double>::quiet_NaN();
  double final_mass_error = std::numeric_limits<double>::quiet_NaN();
  double final_mass_hat = std::numeric_limits<double>::quiet_NaN();
  double final_mass_true = 0.0;
  int ticks = 0;
  int infeasible_ticks = 0;
  int max_iter_ticks = 0;
  int fallback_ticks = 0;
  double max_grf_violation = 0.0;
  double min_stability_margin = std::numeric_limits<double>::infinity();
  std::string diagnostics;
};

struct EpisodeOptions {
  bool keep_telemetry = true;
  std::function<void(const TelemetryRow&)> observer;
};

struct EpisodeOutput {
  std::vector<TelemetryRow> telemetry;
  EpisodeResult result;
  Terrain terrain;
};

inline Terrain scenario_terrain(const Scenario& s) {
  TerrainParams p = s.terrain.params;
  if (s.terrain.kind == "flat") p.density = 0.0;
  return generate_terrain(s.seed, p);
}

/// Closed-loop run: the plant integrates the true combined inertial
/// parameters with `substeps` RK steps per controller tick under a
/// zero-order hold of the applied forces.
inline EpisodeOutput run_episode(const Scenario& scenario, const EpisodeOptions& options = {}) {
  scenario.validate();
  EpisodeOutput out;
  EpisodeResult& res = out.result;
  res.seed = scenario.seed;
  res.mode = scenario.mode;

  const MpcConfig cfg = scenario.effective_controller();
  const double ts = cfg.sample_time;
  const double dt = ts / scenario.sim.substeps;
  const Vec3 gravity = cfg.gravity_vector();
  out.terrain = scenario_terrain(scenario);
  const Terrain& terrain = out.terrain;

  // Plant parameters: base body plus payloads attached before the start.
  const InertialParams base = scenario.robot.params();
  InertialParams plant = base;
  Vec3 com_offset = Vec3::Zero();
  for (const auto& p : scenario.payloads) {
    if (p.dynamic) continue;
    const auto c = combine_payload(plant, com_offset, p.spec());
    plant = c.params;
    com_offset = c.com_offset;
  }
  std::vector<bool> payload_done(scenario.payloads.size(), false);
  for (size_t i = 0; i < scenario.payloads.size(); ++i) payload_done[i] = !scenario.payloads[i].dynamic;
  std::vector<bool> push_started(scenario.pushes.size(), false);

  RigidBodyState body;
  const double ground0 = terrain.height(0.0, 0.0);
  body.position = Vec3(0.0, 0.0, ground0 + scenario.command_at(0.0).height);
  FootSet feet;
  for (int j = 0; j < kNumFeet; ++j) {
    const auto& o = scenario.robot.foot_offsets[j];
    feet.positions[j] = Vec3(o.x(), o.y(), terrain.height(o.x(), o.y()));
  }

  AmpcController controller(cfg, base, scenario.robot.height);
  std::mt19937_64 noise_rng(scenario.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);

  StanceFlags prev_stance{true, true, true, true};
  double ground = ground0;
  const int n_ticks = static_cast<int>(std::lround(scenario.duration / ts));
  const double x_start = body.position.x();

  double speed_sum = 0.0, height_sum = 0.0;
  int metric_count = 0;
  std::vector<std::pair<double, double>> height_trace;

  auto fell = [&](const RigidBodyState& b, double g) {
    if (!b.finite()) return true;
    const Vec3 rpy = roll_pitch_yaw(b.rotation);
    return std::abs(rpy.x()) > scenario.sim.fall_angle || std::abs(rpy.y()) > scenario.sim.fall_angle ||
           b.position.z() - g < scenario.sim.fall_height;
  };

  try {
    for (int tick = 0; tick < n_ticks; ++tick) {
      const double t = tick * ts;
      TelemetryRow row;
      row.tick = tick;
      row.time = t;

      // Events take effect at tick boundaries.
      for (size_t i = 0; i < scenario.payloads.size(); ++i) {
        const auto& p = scenario.payloads[i];
        if (payload_done[i] || p.time > t + 1e-9) continue;
        payload_done[i] = true;
        const auto c = combine_payload(plant, com_offset, p.spec());
        body.position += body.rotation * c.com_shift;
        body.velocity += body.rotation * body.omega.cross(c.com_shift);
        plant = c.params;
        com_offset = c.com_offset;
        row.event = kEventPayload;
      }
      for (size_t i = 0; i < scenario.pushes.size(); ++i) {
        if (!push_started[i] && scenario.pushes[i].time <= t + 1e-9) {
          push_started[i] = true;
          row.event = kEventPushStart;
        }
      }

      // Contacts: feet touching down are placed at their Raibert target.
      const Command cmd = scenario.command_at(t);
      const double yaw = roll_pitch_yaw(body.rotation).z();
      const Mat3 heading = rot_z(yaw);
      const Vec3 v_des_world = heading * cmd.v_des;
      const ContactSchedule schedule = contact_schedule(t, scenario.gait, cfg.horizon, ts);
      for (int j = 0; j < kNumFeet; ++j) {
        if (schedule.now[j] && !prev_stance[j]) {
          const auto& o = scenario.robot.foot_offsets[j];
          const Vec3 hip = body.position + heading * Vec3(o.x(), o.y(), 0.0);
          feet.positions[j] = raibert_foothold(hip, body.velocity, v_des_world,
                                               scenario.gait.stance_time(), terrain, scenario.gait.k_v);
        }
      }
      feet.stance = schedule.now;
      prev_stance = schedule.now;
      if (feet.stance_count() > 0) {
        double zsum = 0.0;
        for (int j = 0; j < kNumFeet; ++j) {
          if (feet.stance[j]) zsum += feet.positions[j].z();
        }
        ground = zsum / feet.stance_count();
      }

      Measurement meas;
      meas.body = body;
      meas.feet = feet;
      meas.ground = ground;
      if (scenario.sim.sensor_noise > 0.0) {
        const double sd = scenario.sim.sensor_noise;
        for (int k = 0; k < 3; ++k) {
          meas.body.position(k) += sd * noise(noise_rng);
          meas.body.velocity(k) += sd * noise(noise_rng);
          meas.body.omega(k) += sd * noise(noise_rng);
        }
      }

      const TickResult tr = controller.tick(meas, cmd, schedule);

      row.position = body.position;
      row.velocity = body.velocity;
      row.rpy = roll_pitch_yaw(body.rotation);
      row.omega = body.omega;
      row.ground = ground;
      row.height = body.position.z() - ground;
      row.v_des = v_des_world;
      row.yaw_rate_des = cmd.yaw_rate;
      row.height_des = cmd.height;
      row.x_local = tr.x_local;
      row.u0 = tr.u0;
      row.stance = feet.stance;
      row.x_pred = tr.x_next_predicted;
      row.x_tilde = tr.x_error;
      row.theta_hat = controller.theta_hat();
      row.mass_hat = tr.mass_hat;
      row.mass_true = plant.mass;
      row.lambda_max = tr.stability.lambda_max;
      row.stability_margin = tr.stability.margin;
      row.qp_status = static_cast<int>(tr.status);
      row.qp_iterations = tr.iterations;
      row.active_constraints = tr.active_constraints;
      row.fallback = tr.fallback;
      row.grf_violation = grf_violation(tr.u0, feet.stance, cfg.mu, cfg.f_z_min, cfg.f_z_max);
      if (controller.last_solution() && cfg.stability_constraint) {
        row.input_bound = controller.last_solution()->diagnostics.input_bound.bound;
      }

      res.ticks = tick + 1;
      if (tr.status == qp::QpStatus::kInfeasible) ++res.infeasible_ticks;
      if (tr.status == qp::QpStatus::kMaxIter) ++res.max_iter_ticks;
      if (tr.fallback) ++res.fallback_ticks;
      res.max_grf_violation = std::max(res.max_grf_violation, row.grf_violation);
      res.min_stability_margin = std::min(res.min_stability_margin, row.stability_margin);
      res.final_mass_hat = tr.mass_hat;
      res.final_mass_true = plant.mass;

      if (t >= scenario.sim.metrics_start - 1e-12) {
        speed_sum += (heading.transpose() * body.velocity).x();
        height_sum += row.height;
        ++metric_count;
      }
      height_trace.emplace_back(t, row.height);

      // Plant integration under a zero-order hold.
      for (int sub = 0; sub < scenario.sim.substeps; ++sub) {
        const double ts_sub = t + sub * dt;
        Vec3 push = Vec3::Zero();
        for (const auto& p : scenario.pushes) {
          if (ts_sub >= p.time - 1e-12 && ts_sub < p.time + p.duration - 1e-12) push += p.force;
        }
        if (sub == 0) row.push_force = push;
        body = integrate_step(body, tr.u0, feet, plant, dt, gravity, push);
      }

      if (options.observer) options.observer(row);
      if (options.keep_telemetry) out.telemetry.push_back(std::move(row));

      if (fell(body, ground)) {
        res.fall_time = t + ts;
        break;
      }
      if (scenario.sim.distance_target > 0.0 &&
          body.position.x() - x_start >= scenario.sim.distance_target) {
        break;
      }
    }
    res.success = std::isnan(res.fall_time);
  } catch (const std::exception& e) {
    res.success = false;
    res.diagnostics = e.what();
    if (std::isnan(res.fall_time)) res.fall_time = res.ticks * ts;
  }

  res.distance = body.finite() ? body.position.x() - x_start : 0.0;
  if (scenario.sim.distance_target > 0.0) res.distance = std::min(res.distance, scenario.sim.distance_target);
  if (metric_count > 0) {
    res.mean_speed = speed_sum / metric_count;
    res.mean_height = height_sum / metric_count;
  }
  if (!height_trace.empty()) {
    const double t_end = height_trace.back().first;
    double sum = 0.0;
    int n = 0;
    for (const auto& [t, h] : height_trace) {
      if (t >= t_end - scenario.sim.sustain_window) {
        sum += h;
        ++n;
      }
    }
    res.trailing_height = sum / n;
  }
  res.sustained = res.success && res.trailing_height >= scenario.sim.sustain_height;
  if (std::isfinite(res.final_mass_hat) && res.final_mass_true > 0.0) {
    res.final_mass_error = std::abs(res.final_mass_hat - res.final_mass_true) / res.final_mass_true;
  }
  return out;
}

/// Worker count: the request, capped by AMPC_LAB_THREADS and the job count.
inline int effective_parallelism(int requested, int jobs) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("AMPC_LAB_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, std::min(n, jobs));
}

struct BatchResult {
  std::vector<EpisodeResult> episodes;   // sorted by seed
  std::vector<double> distance_grid;
  std::vector<double> success_rate;      // fraction reaching each grid distance
  double overall_success = 0.0;
};

inline std::vector<double> distance_grid(double length, double step = 0.5) {
  std::vector<double> g;
  const int n = static_cast<int>(std::floor(length / step + 1e-9));
  for (int i = 0; i <= n; ++i) g.push_back(i * step);
  return g;
}

/// Fraction of episodes that travelled at least each grid distance without
/// falling (a successful episode counts for the whole course).
inline std::vector<double> success_curve(const std::vector<EpisodeResult>& eps, const std::vector<double>& grid,
                                         double course) {
  std::vector<double> rate(grid.size(), 0.0);
  if (eps.empty()) return rate;
  for (size_t g = 0; g < grid.size(); ++g) {
    int ok = 0;
    for (const auto& e : eps) {
      const double reach = e.success ? std::max(course, e.distance) : e.distance;
      if (reach >= grid[g] - 1e-9) ++ok;
    }
    rate[g] = static_cast<double>(ok) / eps.size();
  }
  return rate;
}

/// Runs one episode per seed on a worker pool. Results do not depend on the
/// number of workers.
inline BatchResult run_batch(const Scenario& tmpl, std::vector<std::uint64_t> seeds, int parallelism,
                             const std::function<EpisodeOptions(std::uint64_t)>& options_for = {}) {
  std::sort(seeds.begin(), seeds.end());
  if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end()) {
    throw std::invalid_argument("run_batch: seeds must be distinct");
  }
  BatchResult out;
  out.episodes.resize(seeds.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next++; i < seeds.size(); i = next++) {
      Scenario s = tmpl;
      s.seed = seeds[i];
      EpisodeOptions opt = options_for ? options_for(seeds[i]) : EpisodeOptions{};
      opt.keep_telemetry = false;
      try {
        out.episodes[i] = run_episode(s, opt).result;
      } catch (const std::exception& e) {
        EpisodeResult r;
        r.seed = seeds[i];
        r.mode = s.mode;
        r.diagnostics = e.what();
        out.episodes[i] = r;
      }
    }
  };
  const int n = effective_parallelism(parallelism, static_cast<int>(seeds.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  const double course = tmpl.sim.distance_target > 0.0 ? tmpl.sim.distance_target : tmpl.terrain.params.length;
  out.distance_grid = distance_grid(course);
  out.success_rate = success_curve(out.episodes, out.distance_grid, course);
  int ok = 0;
  for (const auto& e : out.episodes) ok += e.success ? 1 : 0;
  out.overall_success = out.episodes.empty() ? 0.0 : static_cast<double>(ok) / out.episodes.size();
  return out;
}

}  // namespace ampc
