#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ampc/srb.hpp"

namespace ampc {

// Legs: 0 FR, 1 FL, 2 RR, 3 RL.
struct GaitConfig {
  double phase_duration = 0.15;                 // s per trot phase
  double duty = 0.5;                            // stance fraction of the 2-phase cycle
  std::array<int, kNumFeet> pair{0, 1, 1, 0};   // 0: pair A (stance at t = 0), 1: pair B
  double k_v = 0.03;                            // Raibert velocity gain, s

  void validate() const {
    if (!(phase_duration > 0.0)) throw std::invalid_argument("GaitConfig: phase_duration must be > 0");
    if (!(duty > 0.0 && duty <= 1.0)) throw std::invalid_argument("GaitConfig: duty must be in (0, 1]");
    for (int p : pair) {
      if (p != 0 && p != 1) throw std::invalid_argument("GaitConfig: pair entries must be 0 or 1");
    }
  }

  double cycle() const { return 2.0 * phase_duration; }
  double stance_time() const { return duty * cycle(); }
  bool standing() const { return duty >= 1.0; }
};

struct ContactSchedule {
  StanceFlags now{true, true, true, true};
  std::vector<StanceFlags> horizon;   // one entry per prediction step
};

inline StanceFlags stance_at(double t, const GaitConfig& cfg) {
  StanceFlags s{true, true, true, true};
  if (cfg.standing()) return s;
  const double cycles = t / cfg.cycle();
  const double base = cycles - std::floor(cycles + 1e-9);
  for (int j = 0; j < kNumFeet; ++j) {
    double phase = base + 0.5 * cfg.pair[j];
    phase -= std::floor(phase + 1e-9);
    s[j] = phase + 1e-9 < cfg.duty;
  }
  return s;
}

/// Stance flags for the current tick; the horizon reuses them.
inline ContactSchedule contact_schedule(double t, const GaitConfig& cfg, int horizon, double sample_time) {
  cfg.validate();
  if (horizon < 1) throw std::invalid_argument("contact_schedule: horizon must be >= 1");
  if (!(sample_time > 0.0)) throw std::invalid_argument("contact_schedule: sample_time must be > 0");
  ContactSchedule c;
  c.now = stance_at(t, cfg);
  c.horizon.assign(horizon, c.now);
  return c;
}

/// Axis-aligned height grid. Cell (i, j) covers
/// [x0 + i*cell, x0 + (i+1)*cell) x [y0 + j*cell, y0 + (j+1)*cell).
class Terrain {
 public:
  Terrain() : Terrain(-1.0, -1.0, 0.05, 1, 1) {}

  Terrain(double x0, double y0, double cell, int nx, int ny)
      : x0_(x0), y0_(y0), cell_(cell), nx_(nx), ny_(ny), heights_(static_cast<size_t>(nx) * ny, 0.0) {
    if (!(cell > 0.0) || nx < 1 || ny < 1) throw std::invalid_argument("Terrain: bad grid");
  }

  static Terrain flat(double length = 10.0, double width = 2.0, double cell = 0.05) {
    const int nx = static_cast<int>(std::ceil((length + 2.0) / cell));
    const int ny = static_cast<int>(std::ceil(width / cell));
    return Terrain(-1.0, -0.5 * ny * cell, cell, nx, ny);
  }

  double x0() const { return x0_; }
  double y0() const { return y0_; }
  double cell() const { return cell_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

  double at(int i, int j) const { return heights_[static_cast<size_t>(j) * nx_ + i]; }
  void set(int i, int j, double h) {
    if (!std::isfinite(h)) throw std::invalid_argument("Terrain: non-finite height");
    heights_[static_cast<size_t>(j) * nx_ + i] = h;
  }

  /// Height of the cell containing (x, y); clamped to the boundary outside.
  double height(double x, double y) const {
    const int i = std::clamp(static_cast<int>(std::floor((x - x0_) / cell_)), 0, nx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor((y - y0_) / cell_)), 0, ny_ - 1);
    return at(i, j);
  }

  double max_height() const { return *std::max_element(heights_.begin(), heights_.end()); }
  const std::vector<double>& heights() const { return heights_; }

  bool operator==(const Terrain& o) const {
    return x0_ == o.x0_ && y0_ == o.y0_ && cell_ == o.cell_ && nx_ == o.nx_ && ny_ == o.ny_ &&
           heights_ == o.heights_;
  }

  /// Row per y index, one column per x index; header carries the grid geometry.
  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write terrain file: " + path);
    out << "# x0=" << x0_ << " y0=" << y0_ << " cell=" << cell_ << " nx=" << nx_ << " ny=" << ny_ << "\n";
    out << std::setprecision(6);
    for (int j = 0; j < ny_; ++j) {
      for (int i = 0; i < nx_; ++i) out << (i ? "," : "") << at(i, j);
      out << "\n";
    }
  }

 private:
  double x0_, y0_, cell_;
  int nx_, ny_;
  std::vector<double> heights_;
};

struct TerrainParams {
  double length = 10.0;        // m of course along +x
  double width = 2.0;          // m
  double cell = 0.05;          // m
  double block_height = 0.05;  // m
  double density = 0.2;        // expected covered area fraction
  double block_min = 0.2;      // block side range, m
  double block_max = 0.5;
  double clear_start = 0.5;    // blocks start beyond this x

  void validate() const {
    if (!(length > 0.0) || !(width > 0.0) || !(cell > 0.0)) throw std::invalid_argument("TerrainParams: sizes must be > 0");
    if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("TerrainParams: density must be in [0, 1]");
    if (!(block_min > 0.0 && block_max >= block_min)) throw std::invalid_argument("TerrainParams: bad block size range");
    if (!std::isfinite(block_height)) throw std::invalid_argument("TerrainParams: block_height");
  }
};

namespace detail {
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}
}  // namespace detail

/// Square blocks of one height scattered uniformly; overlaps do not stack.
inline Terrain generate_terrain(std::uint64_t seed, const TerrainParams& p) {
  p.validate();
  Terrain t = Terrain::flat(p.length, p.width, p.cell);
  if (p.density == 0.0 || p.block_height == 0.0) return t;
  std::mt19937_64 eng(seed);
  const double mean_side = 0.5 * (p.block_min + p.block_max);
  const double x_lo = p.clear_start;
  const double x_hi = p.length + 1.0;
  const double area = (x_hi - x_lo) * p.width;
  const int count = static_cast<int>(std::lround(p.density * area / (mean_side * mean_side)));
  const double y_lo = t.y0();
  for (int b = 0; b < count; ++b) {
    const double side = p.block_min + (p.block_max - p.block_min) * detail::uniform01(eng);
    const double cx = x_lo + (x_hi - x_lo) * detail::uniform01(eng);
    const double cy = y_lo + p.width * detail::uniform01(eng);
    const int i0 = std::max(0, static_cast<int>(std::floor((cx - 0.5 * side - t.x0()) / p.cell)));
    const int i1 = std::min(t.nx() - 1, static_cast<int>(std::floor((cx + 0.5 * side - t.x0()) / p.cell)));
    const int j0 = std::max(0, static_cast<int>(std::floor((cy - 0.5 * side - t.y0()) / p.cell)));
    const int j1 = std::min(t.ny() - 1, static_cast<int>(std::floor((cy + 0.5 * side - t.y0()) / p.cell)));
    const int i_clear = static_cast<int>(std::ceil((x_lo - t.x0()) / p.cell));
    for (int i = std::max(i0, i_clear); i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) t.set(i, j, p.block_height);
    }
  }
  return t;
}

inline Terrain generate_terrain(std::uint64_t seed, double length, double block_height, double density) {
  TerrainParams p;
  p.length = length;
  p.block_height = block_height;
  p.density = density;
  return generate_terrain(seed, p);
}

/// Touchdown target: hip + (T_stance/2) v + k_v (v - v_des) in the plane,
/// height read from the terrain.
inline Vec3 raibert_foothold(const Vec3& hip, const Vec3& v, const Vec3& v_des, double stance_time,
                             const Terrain& terrain, double k_v = 0.03) {
  Vec3 target;
  for (int k = 0; k < 2; ++k) target(k) = hip(k) + 0.5 * stance_time * v(k) + k_v * (v(k) - v_des(k));
  target.z() = terrain.height(target.x(), target.y());
  return target;
}

}  // namespace ampc
