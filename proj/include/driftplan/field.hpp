#pragma once

// Spatiotemporal disturbance (ocean current) fields on a regular grid.
//
// A field stores one (u_east, v_north) pair per cell and frame. Cell (ix, iy)
// covers world x in [ix*cell_size, (ix+1)*cell_size) and likewise for y; the
// stored value sits at the cell center. Queries interpolate bilinearly in
// space, linearly in time, and clamp to the nearest edge / frame outside the
// stored extent.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace driftplan {

struct FieldFrame {
  double t = 0.0;
  std::vector<double> u;  // row-major: iy * grid_w + ix
  std::vector<double> v;
};

struct FieldJacobian {
  double dwx_dx = 0.0;
  double dwx_dy = 0.0;
  double dwy_dx = 0.0;
  double dwy_dy = 0.0;
};

class DisturbanceField {
 public:
  // Magnitudes above strength_cap are scaled down onto the cap.
  DisturbanceField(int grid_w, int grid_h, double cell_size, std::vector<FieldFrame> frames,
                   double strength_cap);

  int grid_w() const { return grid_w_; }
  int grid_h() const { return grid_h_; }
  double cell_size() const { return cell_size_; }
  double strength_cap() const { return strength_cap_; }
  const std::vector<FieldFrame>& frames() const { return frames_; }
  std::size_t n_frames() const { return frames_.size(); }

  Eigen::Vector2d cell(std::size_t frame, int ix, int iy) const;
  Eigen::Vector2d cell_center(int ix, int iy) const;

  Eigen::Vector2d sample(double x, double y, double t) const;

  // Central differences of sample() with step cell_size / 2.
  FieldJacobian jacobian(double x, double y, double t) const;
  FieldJacobian jacobian(double x, double y, double t, double step) const;

  // Cell-center values at time t (linear in time between frames).
  void raster(double t, std::span<double> u_out, std::span<double> v_out) const;

  double max_magnitude() const;

 private:
  struct TimeBracket {
    std::size_t lo, hi;
    double w_hi;
  };
  TimeBracket bracket(double t) const;
  Eigen::Vector2d sample_frame(const FieldFrame& f, double x, double y) const;

  int grid_w_;
  int grid_h_;
  double cell_size_;
  double strength_cap_;
  std::vector<FieldFrame> frames_;
};

// Axis-aligned cell mask; true marks an obstacle.
class ObstacleMap {
 public:
  ObstacleMap() = default;
  ObstacleMap(int grid_w, int grid_h, double cell_size, bool border);

  int grid_w() const { return grid_w_; }
  int grid_h() const { return grid_h_; }
  bool blocked_cell(int ix, int iy) const;
  // Outside the grid counts as blocked.
  bool blocked(double x, double y) const;
  void set(int ix, int iy, bool value) { cells_[static_cast<std::size_t>(iy) * grid_w_ + ix] = value; }

 private:
  int grid_w_ = 0;
  int grid_h_ = 0;
  double cell_size_ = 1.0;
  std::vector<char> cells_;
};

enum class PatternKind { vortex, meander, spin, centripetal, uniform };

PatternKind parse_pattern_kind(const std::string& name);
std::string to_string(PatternKind kind);

// Center position as a function of time. With period > 0 the center moves
// from `from` to `to` and back once per period (triangle wave); otherwise it
// stays at `from`.
struct CenterPath {
  Eigen::Vector2d from{0.0, 0.0};
  Eigen::Vector2d to{0.0, 0.0};
  double period = 0.0;

  Eigen::Vector2d at(double t) const;
  static CenterPath fixed(Eigen::Vector2d c) { return {c, c, 0.0}; }
};

struct FieldPatternSpec {
  PatternKind kind = PatternKind::vortex;
  CenterPath center_path;
  double strength = 0.5;
  double scale = 6.0;  // decay length / meander wavelength; +inf disables decay
  double amplitude = 1.0;  // meander cross-stream amplitude A
  double direction = 0.0;  // uniform flow heading (rad)
  double noise = 0.0;      // seeded static per-cell jitter, as a fraction of strength
  std::uint64_t seed = 0;

  void validate() const;
};

// Closed-form pattern value before grid sampling and clamping.
//   vortex:      counterclockwise tangential, speed s*(r/L)*exp((1-(r/L)^2)/2), peak s at r=L
//   centripetal: -s*exp(-r^2/(2L^2)) toward the center
//   spin:        s*(-(y-cy), x-cx)
//   meander:     (s, A*s*cos(2*pi*(x-cx)/L))
//   uniform:     s*(cos(direction), sin(direction))
Eigen::Vector2d evaluate_pattern(const FieldPatternSpec& spec, double x, double y, double t);

DisturbanceField generate(const FieldPatternSpec& spec, int grid_w, int grid_h, int n_frames,
                          double dt_frame, double cell_size = 1.0, double strength_cap = 1.0);

DisturbanceField crop(const DisturbanceField& field, int x0, int y0, int w, int h);

struct CurrentCsvSchema {
  double cell_size = 1.0;
  double strength_cap = 1.0;
};

// CSV with header `t_sec,ix,iy,u_east,v_north`.
DisturbanceField ingest_currents(const std::filesystem::path& path, const CurrentCsvSchema& schema);
DisturbanceField ingest_currents(std::istream& in, const CurrentCsvSchema& schema);
void write_currents(const DisturbanceField& field, std::ostream& out);
void write_currents(const DisturbanceField& field, const std::filesystem::path& path);

}  // namespace driftplan
