#pragma once

#include <charconv>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ampc/simlab.hpp"
#include "ampc/svg.hpp"

namespace ampc {

namespace detail {

/// Shortest round-trip text for a double; "nan"/"inf" spelled out.
inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline const char* axis(int k) { return k == 0 ? "x" : k == 1 ? "y" : "z"; }

}  // namespace detail

inline std::vector<std::string> telemetry_columns() {
  std::vector<std::string> c{"tick", "time"};
  for (const char* g : {"pos", "vel", "rpy", "omega"}) {
    for (int k = 0; k < 3; ++k) c.push_back(std::string(g) + "_" + detail::axis(k));
  }
  for (const char* n : {"ground", "height", "v_des_x", "v_des_y", "v_des_z", "yaw_rate_des", "height_des"}) {
    c.push_back(n);
  }
  for (int i = 0; i < kStateDim; ++i) c.push_back("x_local_" + std::to_string(i));
  for (int j = 0; j < kNumFeet; ++j) {
    for (int k = 0; k < 3; ++k) c.push_back("u0_" + std::to_string(j) + "_" + detail::axis(k));
  }
  for (int j = 0; j < kNumFeet; ++j) c.push_back("stance_" + std::to_string(j));
  for (int i = 0; i < kStateDim; ++i) c.push_back("x_pred_" + std::to_string(i));
  for (int i = 0; i < kStateDim; ++i) c.push_back("x_tilde_" + std::to_string(i));
  for (int i = 0; i < kThetaDim; ++i) c.push_back("theta_hat_" + std::to_string(i));
  for (const char* n : {"mass_hat", "mass_true", "lambda_max", "stability_margin", "qp_status", "qp_iterations",
                        "active_constraints", "fallback", "grf_violation", "input_bound", "event", "push_x",
                        "push_y", "push_z"}) {
    c.push_back(n);
  }
  return c;
}

inline std::string telemetry_row_csv(const TelemetryRow& r) {
  using detail::num;
  std::string s = std::to_string(r.tick) + "," + num(r.time);
  auto add = [&](double v) { s += ","; s += num(v); };
  auto add_int = [&](long v) { s += ","; s += std::to_string(v); };
  for (const Vec3* v : {&r.position, &r.velocity, &r.rpy, &r.omega}) {
    for (int k = 0; k < 3; ++k) add((*v)(k));
  }
  add(r.ground);
  add(r.height);
  for (int k = 0; k < 3; ++k) add(r.v_des(k));
  add(r.yaw_rate_des);
  add(r.height_des);
  for (int i = 0; i < kStateDim; ++i) add(r.x_local(i));
  for (int i = 0; i < kNumInputs; ++i) add(r.u0(i));
  for (int j = 0; j < kNumFeet; ++j) add_int(r.stance[j] ? 1 : 0);
  for (int i = 0; i < kStateDim; ++i) add(r.x_pred(i));
  for (int i = 0; i < kStateDim; ++i) add(r.x_tilde(i));
  for (int i = 0; i < kThetaDim; ++i) add(i < r.theta_hat.size() ? r.theta_hat(i) : std::nan(""));
  add(r.mass_hat);
  add(r.mass_true);
  add(r.lambda_max);
  add(r.stability_margin);
  add_int(r.qp_status);
  add_int(r.qp_iterations);
  add_int(r.active_constraints);
  add_int(r.fallback ? 1 : 0);
  add(r.grf_violation);
  add(r.input_bound);
  add_int(r.event);
  for (int k = 0; k < 3; ++k) add(r.push_force(k));
  return s;
}

/// Telemetry CSV plus a `<path>.meta.json` sidecar carrying the schema.
inline void write_telemetry_csv(const std::vector<TelemetryRow>& rows, const std::string& path) {
  auto out = detail::open_out(path);
  const auto cols = telemetry_columns();
  for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : rows) out << telemetry_row_csv(r) << "\n";
  detail::finish(out, path);

  nlohmann::json meta;
  meta["schema_version"] = kTelemetrySchemaVersion;
  meta["columns"] = cols;
  meta["rows"] = rows.size();
  meta["events"] = {{"0", "none"}, {"1", "payload"}, {"2", "push_start"}};
  meta["qp_status"] = {{"0", qp::to_string(qp::QpStatus::kOptimal)},
                       {"1", qp::to_string(qp::QpStatus::kInfeasible)},
                       {"2", qp::to_string(qp::QpStatus::kMaxIter)}};
  const std::string meta_path = path + ".meta.json";
  auto m = detail::open_out(meta_path);
  m << meta.dump(2) << "\n";
  detail::finish(m, meta_path);
}

inline std::vector<std::string> result_columns() {
  return {"seed", "mode", "success", "sustained", "distance", "mean_speed", "mean_height", "trailing_height",
          "fall_time", "final_mass_error", "final_mass_hat", "final_mass_true", "ticks", "infeasible_ticks",
          "max_iter_ticks", "fallback_ticks", "max_grf_violation", "min_stability_margin", "diagnostics"};
}

inline std::string result_row_csv_header() {
  std::string h;
  for (const auto& c : result_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

inline std::string result_row_csv(const EpisodeResult& e) {
  using detail::num;
  std::string diag = e.diagnostics;
  for (char& c : diag) {
    if (c == ',' || c == '\n' || c == '"') c = ';';
  }
  return std::to_string(e.seed) + "," + e.mode + "," + (e.success ? "1" : "0") + "," + (e.sustained ? "1" : "0") +
         "," + num(e.distance) + "," + num(e.mean_speed) + "," + num(e.mean_height) + "," +
         num(e.trailing_height) + "," + num(e.fall_time) + "," + num(e.final_mass_error) + "," +
         num(e.final_mass_hat) + "," + num(e.final_mass_true) + "," + std::to_string(e.ticks) + "," +
         std::to_string(e.infeasible_ticks) + "," + std::to_string(e.max_iter_ticks) + "," +
         std::to_string(e.fallback_ticks) + "," + num(e.max_grf_violation) + "," + num(e.min_stability_margin) +
         "," + diag;
}

inline void write_results_csv(const std::vector<EpisodeResult>& eps, const std::string& path) {
  auto out = detail::open_out(path);
  out << result_row_csv_header() << "\n";
  for (const auto& e : eps) out << result_row_csv(e) << "\n";
  detail::finish(out, path);
}

/// One column of success rates per labelled batch on a shared grid.
inline void write_success_curve_csv(const std::vector<std::pair<std::string, const BatchResult*>>& batches,
                                    const std::string& path) {
  auto out = detail::open_out(path);
  out << "distance";
  for (const auto& [label, b] : batches) out << ",success_" << label;
  out << "\n";
  if (!batches.empty()) {
    const auto& grid = batches.front().second->distance_grid;
    for (size_t g = 0; g < grid.size(); ++g) {
      out << detail::num(grid[g]);
      for (const auto& [label, b] : batches) out << "," << detail::num(b->success_rate.at(g));
      out << "\n";
    }
  }
  detail::finish(out, path);
}

inline svg::Plot speed_height_plot(const std::vector<TelemetryRow>& rows) {
  svg::Plot p;
  p.title = "Tracked and desired speed / height";
  p.x_label = "time [s]";
  p.y_label = "speed [m/s], height [m]";
  svg::Series v{"forward speed", {}, {}, "#1f77b4"}, vd{"desired speed", {}, {}, "#1f77b4", "6 4"};
  svg::Series h{"height", {}, {}, "#d62728"}, hd{"desired height", {}, {}, "#d62728", "6 4"};
  for (const auto& r : rows) {
    const Mat3 heading = rot_z(r.rpy.z());
    v.x.push_back(r.time);
    v.y.push_back((heading.transpose() * r.velocity).x());
    vd.x.push_back(r.time);
    vd.y.push_back((heading.transpose() * r.v_des).x());
    h.x.push_back(r.time);
    h.y.push_back(r.height);
    hd.x.push_back(r.time);
    hd.y.push_back(r.height_des);
  }
  p.series = {v, vd, h, hd};
  return p;
}

inline svg::Plot grf_plot(const std::vector<TelemetryRow>& rows, int leg = 0) {
  svg::Plot p;
  p.title = "Vertical ground reaction force, leg " + std::to_string(leg);
  p.x_label = "time [s]";
  p.y_label = "f_z [N]";
  svg::Series f{"f_z leg " + std::to_string(leg), {}, {}, "#2ca02c"};
  for (const auto& r : rows) {
    f.x.push_back(r.time);
    f.y.push_back(r.u0(3 * leg + 2));
  }
  p.series = {f};
  return p;
}

inline svg::Plot mass_plot(const std::vector<TelemetryRow>& rows) {
  svg::Plot p;
  p.title = "Estimated and true mass";
  p.x_label = "time [s]";
  p.y_label = "mass [kg]";
  svg::Series est{"estimated mass", {}, {}, "#1f77b4"};
  svg::Series tru{"true mass", {}, {}, "#000000", "6 4", true};
  for (const auto& r : rows) {
    est.x.push_back(r.time);
    est.y.push_back(r.mass_hat);
    tru.x.push_back(r.time);
    tru.y.push_back(r.mass_true);
    if (r.event == kEventPayload) p.markers.push_back({r.time, "payload"});
    if (r.event == kEventPushStart) p.markers.push_back({r.time, "push"});
  }
  p.series = {est, tru};
  return p;
}

inline svg::Plot success_plot(const std::vector<std::pair<std::string, const BatchResult*>>& batches) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  svg::Plot p;
  p.title = "Success rate over travelled distance";
  p.x_label = "distance [m]";
  p.y_label = "success rate";
  for (size_t i = 0; i < batches.size(); ++i) {
    svg::Series s{batches[i].first, batches[i].second->distance_grid, batches[i].second->success_rate,
                  colors[i % 4]};
    p.series.push_back(s);
  }
  return p;
}

struct EpisodeArtifacts {
  std::string telemetry, speed_height, grf, mass, success_distance, terrain;
};

/// Telemetry, terrain and the four episode plots into `dir`.
inline EpisodeArtifacts write_episode_outputs(const EpisodeOutput& ep, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
  EpisodeArtifacts a;
  a.telemetry = (fs::path(dir) / "telemetry.csv").string();
  a.speed_height = (fs::path(dir) / "speed_height.svg").string();
  a.grf = (fs::path(dir) / "grf.svg").string();
  a.mass = (fs::path(dir) / "mass.svg").string();
  a.success_distance = (fs::path(dir) / "success_distance.svg").string();
  a.terrain = (fs::path(dir) / "terrain.csv").string();
  write_telemetry_csv(ep.telemetry, a.telemetry);
  ep.terrain.write_csv(a.terrain);
  svg::write(speed_height_plot(ep.telemetry), a.speed_height);
  svg::write(grf_plot(ep.telemetry, 0), a.grf);
  svg::write(mass_plot(ep.telemetry), a.mass);

  // Single-episode analog of the batch curve: 1 up to the reached distance.
  BatchResult single;
  const double course = std::max(ep.result.distance, 0.5);
  single.distance_grid = distance_grid(std::ceil(course * 2.0) / 2.0);
  single.success_rate = success_curve({ep.result}, single.distance_grid, ep.result.distance);
  svg::write(success_plot({{ep.result.mode, &single}}), a.success_distance);
  return a;
}

/// Reads back a telemetry CSV written by write_telemetry_csv.
inline std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  if (std::getline(in, line) && header) {
    header->clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header->push_back(cell);
  }
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Rebuilds telemetry rows from a CSV written by write_telemetry_csv.
inline std::vector<TelemetryRow> read_telemetry_csv(const std::string& path) {
  std::vector<std::string> header;
  const auto data = read_numeric_csv(path, &header);
  if (header != telemetry_columns()) throw std::runtime_error("unexpected telemetry columns in " + path);
  std::vector<TelemetryRow> rows;
  rows.reserve(data.size());
  for (const auto& d : data) {
    if (d.size() != header.size()) throw std::runtime_error("ragged telemetry row in " + path);
    TelemetryRow r;
    size_t c = 0;
    auto next = [&]() { return d[c++]; };
    r.tick = static_cast<int>(next());
    r.time = next();
    for (Vec3* v : {&r.position, &r.velocity, &r.rpy, &r.omega}) {
      for (int k = 0; k < 3; ++k) (*v)(k) = next();
    }
    r.ground = next();
    r.height = next();
    for (int k = 0; k < 3; ++k) r.v_des(k) = next();
    r.yaw_rate_des = next();
    r.height_des = next();
    for (int i = 0; i < kStateDim; ++i) r.x_local(i) = next();
    for (int i = 0; i < kNumInputs; ++i) r.u0(i) = next();
    for (int j = 0; j < kNumFeet; ++j) r.stance[j] = next() != 0.0;
    for (int i = 0; i < kStateDim; ++i) r.x_pred(i) = next();
    for (int i = 0; i < kStateDim; ++i) r.x_tilde(i) = next();
    r.theta_hat.resize(kThetaDim);
    for (int i = 0; i < kThetaDim; ++i) r.theta_hat(i) = next();
    r.mass_hat = next();
    r.mass_true = next();
    r.lambda_max = next();
    r.stability_margin = next();
    r.qp_status = static_cast<int>(next());
    r.qp_iterations = static_cast<int>(next());
    r.active_constraints = static_cast<int>(next());
    r.fallback = next() != 0.0;
    r.grf_violation = next();
    r.input_bound = next();
    r.event = static_cast<int>(next());
    for (int k = 0; k < 3; ++k) r.push_force(k) = next();
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace ampc
