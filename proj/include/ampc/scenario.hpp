#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ampc/ampc.hpp"
#include "ampc/gait.hpp"
#include "ampc/srb.hpp"

namespace ampc {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kScenarioSchemaVersion = 1;

struct RobotConfig {
  double mass = 12.45;
  Mat3 inertia = default_inertia();
  double height = 0.26;
  std::array<Eigen::Vector2d, kNumFeet> foot_offsets{
      Eigen::Vector2d(0.183, -0.1321), Eigen::Vector2d(0.183, 0.1321),
      Eigen::Vector2d(-0.183, -0.1321), Eigen::Vector2d(-0.183, 0.1321)};

  static Mat3 default_inertia() {
    Mat3 i;
    i << 0.01683993, 8.3902e-5, 0.000597679,
         8.3902e-5, 0.056579028, 2.5134e-5,
         0.000597679, 2.5134e-5, 0.064713601;
    return i;
  }

  InertialParams params() const { return {mass, inertia}; }
};

struct PayloadEvent {
  double time = 0.0;
  double mass = 0.0;
  Vec3 offset{0.0, 0.0, 0.07};     // from the trunk COM, body frame
  Vec3 size{0.3, 0.2, 0.1};        // box sides for the payload's own inertia
  bool dynamic = false;            // false: attached before the episode starts

  PayloadSpec spec() const { return PayloadSpec::box(mass, offset, size); }
};

struct PushEvent {
  double time = 2.0;
  double duration = 0.2;
  Vec3 force{0.0, 100.0, 0.0};     // world frame, N
};

struct CommandSegment {
  double start = 0.0;
  Vec3 v_des = Vec3::Zero();       // heading frame, m/s
  double yaw_rate = 0.0;
  double height = 0.26;
};

struct TerrainConfig {
  std::string kind = "flat";       // flat | rough
  TerrainParams params;
};

struct SimConfig {
  int substeps = 7;                // plant steps per controller tick
  double fall_angle = 0.5;         // rad
  double fall_height = 0.12;       // m above the ground reference
  double metrics_start = 1.0;      // s
  double distance_target = 0.0;    // m; 0 disables
  double sustain_height = 0.20;    // m
  double sustain_window = 2.0;     // s, trailing
  double sensor_noise = 0.0;       // std of additive state noise
};

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string name = "default";
  double duration = 10.0;
  std::uint64_t seed = 1;
  std::string mode = "ampc";       // ampc | baseline
  RobotConfig robot;
  MpcConfig controller;
  GaitConfig gait;
  std::vector<CommandSegment> command{CommandSegment{}};
  TerrainConfig terrain;
  std::vector<PayloadEvent> payloads;
  std::vector<PushEvent> pushes;
  SimConfig sim;

  MpcConfig effective_controller() const {
    return mode == "baseline" ? baseline_mode(controller) : controller;
  }

  Command command_at(double t) const {
    const CommandSegment* seg = &command.front();
    for (const auto& s : command) {
      if (s.start <= t + 1e-12) seg = &s;
    }
    return {seg->v_des, seg->yaw_rate, seg->height};
  }

  void validate() const {
    if (schema_version != kScenarioSchemaVersion) {
      throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
    }
    if (!(duration > 0.0)) throw ConfigError("duration must be > 0");
    if (mode != "ampc" && mode != "baseline") throw ConfigError("mode must be ampc or baseline");
    if (command.empty()) throw ConfigError("command needs at least one segment");
    if (terrain.kind != "flat" && terrain.kind != "rough") throw ConfigError("terrain.kind must be flat or rough");
    if (sim.substeps < 1) throw ConfigError("sim.substeps must be >= 1");
    try {
      robot.params().validate();
      controller.validate();
      gait.validate();
      terrain.params.validate();
      for (const auto& p : payloads) {
        if (!(p.time >= 0.0 && p.time <= duration)) throw ConfigError("payload event time outside the episode");
        p.spec().validate();
      }
      for (const auto& p : pushes) {
        if (!(p.time >= 0.0 && p.time <= duration)) throw ConfigError("push event time outside the episode");
        if (!(p.duration >= 0.0) || !p.force.allFinite()) throw ConfigError("bad push event");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json mat3_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r) a.push_back(json{m(r, 0), m(r, 1), m(r, 2)});
  return a;
}

inline Eigen::VectorXd read_vec(const json& j, int n, const std::string& where) {
  if (!j.is_array() || (n >= 0 && static_cast<int>(j.size()) != n)) {
    throw ConfigError(where + ": expected an array of " + std::to_string(n) + " numbers");
  }
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": expected numbers");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

/// Reads known keys from a JSON object and rejects anything else.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class F>
  void field(const char* key, F&& read) {
    keys_.insert(key);
    if (!j_.contains(key)) return;
    try {
      read(j_.at(key), where_.empty() ? std::string(key) : where_ + "." + key);
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  void num(const char* key, double& out) {
    field(key, [&](const json& v, const std::string& w) {
      if (!v.is_number()) throw ConfigError(w + ": expected a number");
      out = v.get<double>();
    });
  }
  void integer(const char* key, int& out) {
    field(key, [&](const json& v, const std::string& w) {
      if (!v.is_number_integer()) throw ConfigError(w + ": expected an integer");
      out = v.get<int>();
    });
  }
  void u64(const char* key, std::uint64_t& out) {
    field(key, [&](const json& v, const std::string& w) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw ConfigError(w + ": expected a non-negative integer");
      }
      out = v.get<std::uint64_t>();
    });
  }
  void boolean(const char* key, bool& out) {
    field(key, [&](const json& v, const std::string& w) {
      if (!v.is_boolean()) throw ConfigError(w + ": expected true or false");
      out = v.get<bool>();
    });
  }
  void str(const char* key, std::string& out) {
    field(key, [&](const json& v, const std::string& w) {
      if (!v.is_string()) throw ConfigError(w + ": expected a string");
      out = v.get<std::string>();
    });
  }
  void vec3(const char* key, Vec3& out) {
    field(key, [&](const json& v, const std::string& w) { out = read_vec(v, 3, w); });
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (keys_.count(k)) continue;
      std::string valid;
      for (const auto& key : keys_) valid += (valid.empty() ? "" : ", ") + key;
      throw ConfigError("unknown key '" + path(k) + "'; valid keys: " + valid);
    }
  }

 private:
  std::string path(const std::string& k) const { return where_.empty() ? k : where_ + "." + k; }

  const json& j_;
  std::string where_;
  std::set<std::string> keys_;
};

template <class T, class F>
void read_list(const json& v, const std::string& w, std::vector<T>& out, F&& read_one) {
  if (!v.is_array()) throw ConfigError(w + ": expected an array");
  out.clear();
  for (size_t i = 0; i < v.size(); ++i) {
    T item;
    read_one(v[i], w + "." + std::to_string(i), item);
    out.push_back(item);
  }
}

}  // namespace detail

inline json to_json(const Scenario& s) {
  using detail::mat3_json;
  using detail::vec_json;
  json j;
  j["schema_version"] = s.schema_version;
  j["name"] = s.name;
  j["duration"] = s.duration;
  j["seed"] = s.seed;
  j["mode"] = s.mode;

  json feet = json::array();
  for (const auto& f : s.robot.foot_offsets) feet.push_back(json{f.x(), f.y()});
  j["robot"] = {{"mass", s.robot.mass},
                {"inertia", mat3_json(s.robot.inertia)},
                {"height", s.robot.height},
                {"foot_offsets", feet}};

  const MpcConfig& c = s.controller;
  j["controller"] = {{"horizon", c.horizon},
                     {"sample_time", c.sample_time},
                     {"q", vec_json(c.q)},
                     {"p_scale", c.p_scale},
                     {"r", c.r},
                     {"lambda", c.lambda},
                     {"eps_x", c.eps_x},
                     {"n_eff", c.n_eff},
                     {"mu", c.mu},
                     {"f_z_min", c.f_z_min},
                     {"f_z_max", c.f_z_max},
                     {"gravity", c.gravity},
                     {"adaptation_enabled", c.adaptation_enabled},
                     {"pin_constant", c.pin_constant},
                     {"stability_constraint", c.stability_constraint},
                     {"feedforward_cost", c.feedforward_cost}};

  json pairs = json::array();
  for (int p : s.gait.pair) pairs.push_back(p);
  j["gait"] = {{"phase_duration", s.gait.phase_duration},
               {"duty", s.gait.duty},
               {"pair", pairs},
               {"k_v", s.gait.k_v}};

  j["command"] = json::array();
  for (const auto& seg : s.command) {
    j["command"].push_back({{"start", seg.start},
                            {"v_des", vec_json(seg.v_des)},
                            {"yaw_rate", seg.yaw_rate},
                            {"height", seg.height}});
  }

  const TerrainParams& t = s.terrain.params;
  j["terrain"] = {{"kind", s.terrain.kind},
                  {"length", t.length},
                  {"width", t.width},
                  {"cell", t.cell},
                  {"block_height", t.block_height},
                  {"density", t.density},
                  {"block_min", t.block_min},
                  {"block_max", t.block_max},
                  {"clear_start", t.clear_start}};

  j["payloads"] = json::array();
  for (const auto& p : s.payloads) {
    j["payloads"].push_back({{"time", p.time},
                             {"mass", p.mass},
                             {"offset", vec_json(p.offset)},
                             {"size", vec_json(p.size)},
                             {"dynamic", p.dynamic}});
  }
  j["pushes"] = json::array();
  for (const auto& p : s.pushes) {
    j["pushes"].push_back({{"time", p.time}, {"duration", p.duration}, {"force", vec_json(p.force)}});
  }

  j["sim"] = {{"substeps", s.sim.substeps},
              {"fall_angle", s.sim.fall_angle},
              {"fall_height", s.sim.fall_height},
              {"metrics_start", s.sim.metrics_start},
              {"distance_target", s.sim.distance_target},
              {"sustain_height", s.sim.sustain_height},
              {"sustain_window", s.sim.sustain_window},
              {"sensor_noise", s.sim.sensor_noise}};
  return j;
}

/// Strict parse: every key must be known; missing keys keep their defaults.
inline Scenario scenario_from_json(const json& j) {
  using detail::Reader;
  Scenario s;
  Reader top(j, "");
  top.integer("schema_version", s.schema_version);
  top.str("name", s.name);
  top.num("duration", s.duration);
  top.u64("seed", s.seed);
  top.str("mode", s.mode);

  top.field("robot", [&](const json& v, const std::string& w) {
    Reader r(v, w);
    r.num("mass", s.robot.mass);
    r.field("inertia", [&](const json& m, const std::string& wm) {
      if (!m.is_array() || m.size() != 3) throw ConfigError(wm + ": expected a 3x3 array");
      for (int row = 0; row < 3; ++row) s.robot.inertia.row(row) = detail::read_vec(m[row], 3, wm).transpose();
    });
    r.num("height", s.robot.height);
    r.field("foot_offsets", [&](const json& f, const std::string& wf) {
      if (!f.is_array() || f.size() != kNumFeet) throw ConfigError(wf + ": expected 4 [x, y] pairs");
      for (int k = 0; k < kNumFeet; ++k) s.robot.foot_offsets[k] = detail::read_vec(f[k], 2, wf);
    });
    r.finish();
  });

  top.field("controller", [&](const json& v, const std::string& w) {
    Reader r(v, w);
    MpcConfig& c = s.controller;
    r.integer("horizon", c.horizon);
    r.num("sample_time", c.sample_time);
    r.field("q", [&](const json& q, const std::string& wq) { c.q = detail::read_vec(q, kStateDim, wq); });
    r.num("p_scale", c.p_scale);
    r.num("r", c.r);
    r.num("lambda", c.lambda);
    r.num("eps_x", c.eps_x);
    r.integer("n_eff", c.n_eff);
    r.num("mu", c.mu);
    r.num("f_z_min", c.f_z_min);
    r.num("f_z_max", c.f_z_max);
    r.num("gravity", c.gravity);
    r.boolean("adaptation_enabled", c.adaptation_enabled);
    r.boolean("pin_constant", c.pin_constant);
    r.boolean("stability_constraint", c.stability_constraint);
    r.boolean("feedforward_cost", c.feedforward_cost);
    r.finish();
  });

  top.field("gait", [&](const json& v, const std::string& w) {
    Reader r(v, w);
    r.num("phase_duration", s.gait.phase_duration);
    r.num("duty", s.gait.duty);
    r.field("pair", [&](const json& p, const std::string& wp) {
      const Eigen::VectorXd a = detail::read_vec(p, kNumFeet, wp);
      for (int k = 0; k < kNumFeet; ++k) s.gait.pair[k] = static_cast<int>(a(k));
    });
    r.num("k_v", s.gait.k_v);
    r.finish();
  });

  top.field("command", [&](const json& v, const std::string& w) {
    detail::read_list(v, w, s.command, [](const json& e, const std::string& we, CommandSegment& seg) {
      Reader r(e, we);
      r.num("start", seg.start);
      r.vec3("v_des", seg.v_des);
      r.num("yaw_rate", seg.yaw_rate);
      r.num("height", seg.height);
      r.finish();
    });
  });

  top.field("terrain", [&](const json& v, const std::string& w) {
    Reader r(v, w);
    TerrainParams& t = s.terrain.params;
    r.str("kind", s.terrain.kind);
    r.num("length", t.length);
    r.num("width", t.width);
    r.num("cell", t.cell);
    r.num("block_height", t.block_height);
    r.num("density", t.density);
    r.num("block_min", t.block_min);
    r.num("block_max", t.block_max);
    r.num("clear_start", t.clear_start);
    r.finish();
  });

  top.field("payloads", [&](const json& v, const std::string& w) {
    detail::read_list(v, w, s.payloads, [](const json& e, const std::string& we, PayloadEvent& p) {
      Reader r(e, we);
      r.num("time", p.time);
      r.num("mass", p.mass);
      r.vec3("offset", p.offset);
      r.vec3("size", p.size);
      r.boolean("dynamic", p.dynamic);
      r.finish();
    });
  });

  top.field("pushes", [&](const json& v, const std::string& w) {
    detail::read_list(v, w, s.pushes, [](const json& e, const std::string& we, PushEvent& p) {
      Reader r(e, we);
      r.num("time", p.time);
      r.num("duration", p.duration);
      r.vec3("force", p.force);
      r.finish();
    });
  });

  top.field("sim", [&](const json& v, const std::string& w) {
    Reader r(v, w);
    r.integer("substeps", s.sim.substeps);
    r.num("fall_angle", s.sim.fall_angle);
    r.num("fall_height", s.sim.fall_height);
    r.num("metrics_start", s.sim.metrics_start);
    r.num("distance_target", s.sim.distance_target);
    r.num("sustain_height", s.sim.sustain_height);
    r.num("sustain_window", s.sim.sustain_window);
    r.num("sensor_noise", s.sim.sensor_noise);
    r.finish();
  });
  top.finish();
  s.validate();
  return s;
}

/// Every addressable dotted path in a config document.
inline std::vector<std::string> config_paths(const json& j, const std::string& prefix = "") {
  std::vector<std::string> out;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      const std::string p = prefix.empty() ? k : prefix + "." + k;
      out.push_back(p);
      auto sub = config_paths(v, p);
      out.insert(out.end(), sub.begin(), sub.end());
    }
  } else if (j.is_array()) {
    for (size_t i = 0; i < j.size(); ++i) {
      const std::string p = prefix + "." + std::to_string(i);
      out.push_back(p);
      auto sub = config_paths(j[i], p);
      out.insert(out.end(), sub.begin(), sub.end());
    }
  }
  return out;
}

/// Applies "dotted.path=value"; the value is parsed as JSON, else taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  bool ok = true;
  while (ok && std::getline(ss, part, '.')) {
    if (node->is_object() && node->contains(part)) {
      node = &(*node)[part];
    } else if (node->is_array() && !part.empty() &&
               part.find_first_not_of("0123456789") == std::string::npos &&
               std::stoul(part) < node->size()) {
      node = &(*node)[std::stoul(part)];
    } else {
      ok = false;
    }
  }
  if (!ok) {
    std::string valid;
    for (const auto& p : config_paths(doc)) valid += "\n  " + p;
    throw ConfigError("unknown override key '" + key + "'; valid keys:" + valid);
  }
  *node = value;
}

inline json default_config_json() { return to_json(Scenario{}); }

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("invalid JSON in " + path);
  return j;
}

/// Defaults, then the scenario file as a merge patch, then overrides.
inline Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {},
                              json* effective = nullptr) {
  json doc = default_config_json();
  if (!path.empty()) doc.merge_patch(read_json_file(path));
  for (const auto& o : overrides) apply_override(doc, o);
  Scenario s = scenario_from_json(doc);
  if (effective) *effective = to_json(s);
  return s;
}

}  // namespace ampc
