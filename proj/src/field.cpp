#include "driftplan/field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "driftplan/csv.hpp"
#include "driftplan/errors.hpp"

namespace driftplan {

DisturbanceField::DisturbanceField(int grid_w, int grid_h, double cell_size,
                                   std::vector<FieldFrame> frames, double strength_cap)
    : grid_w_(grid_w),
      grid_h_(grid_h),
      cell_size_(cell_size),
      strength_cap_(strength_cap),
      frames_(std::move(frames)) {
  if (grid_w_ < 1 || grid_h_ < 1) throw ConfigError("field grid must be at least 1x1");
  if (!(cell_size_ > 0.0) || !std::isfinite(cell_size_)) throw ConfigError("cell_size must be positive");
  if (!(strength_cap_ >= 0.0)) throw ConfigError("strength_cap must be non-negative");
  if (frames_.empty()) throw ConfigError("field needs at least one frame");
  const std::size_t n = static_cast<std::size_t>(grid_w_) * grid_h_;
  for (std::size_t k = 0; k < frames_.size(); ++k) {
    auto& f = frames_[k];
    if (f.u.size() != n || f.v.size() != n) throw ConfigError("frame grid size mismatch");
    if (!std::isfinite(f.t)) throw ConfigError("non-finite frame timestamp");
    if (k > 0 && !(f.t > frames_[k - 1].t))
      throw ConfigError("frame timestamps must be strictly increasing");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(f.u[i]) || !std::isfinite(f.v[i])) throw ConfigError("non-finite flow value");
      const double mag = std::hypot(f.u[i], f.v[i]);
      if (mag > strength_cap_) {
        const double s = strength_cap_ / mag;
        f.u[i] *= s;
        f.v[i] *= s;
      }
    }
  }
}

Eigen::Vector2d DisturbanceField::cell(std::size_t frame, int ix, int iy) const {
  const auto& f = frames_.at(frame);
  const std::size_t i = static_cast<std::size_t>(iy) * grid_w_ + ix;
  return {f.u.at(i), f.v.at(i)};
}

Eigen::Vector2d DisturbanceField::cell_center(int ix, int iy) const {
  return {(ix + 0.5) * cell_size_, (iy + 0.5) * cell_size_};
}

DisturbanceField::TimeBracket DisturbanceField::bracket(double t) const {
  if (frames_.size() == 1 || t <= frames_.front().t) return {0, 0, 0.0};
  if (t >= frames_.back().t) return {frames_.size() - 1, frames_.size() - 1, 0.0};
  auto it = std::upper_bound(frames_.begin(), frames_.end(), t,
                             [](double value, const FieldFrame& f) { return value < f.t; });
  const std::size_t hi = static_cast<std::size_t>(it - frames_.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - frames_[lo].t) / (frames_[hi].t - frames_[lo].t);
  return {lo, hi, w};
}

namespace {

// Continuous cell index -> (lower index, fraction) with clamp-to-edge.
inline void locate(double coord, double cell_size, int n, int& i0, double& frac) {
  double c = coord / cell_size - 0.5;
  if (n == 1 || !(c > 0.0)) {
    i0 = 0;
    frac = 0.0;
    return;
  }
  if (c >= n - 1) {
    i0 = n - 2;
    frac = 1.0;
    return;
  }
  i0 = static_cast<int>(std::floor(c));
  frac = c - i0;
}

}  // namespace

Eigen::Vector2d DisturbanceField::sample_frame(const FieldFrame& f, double x, double y) const {
  int ix = 0, iy = 0;
  double ax = 0.0, ay = 0.0;
  locate(x, cell_size_, grid_w_, ix, ax);
  locate(y, cell_size_, grid_h_, iy, ay);
  const int ix1 = grid_w_ > 1 ? ix + 1 : ix;
  const int iy1 = grid_h_ > 1 ? iy + 1 : iy;
  const std::size_t w = static_cast<std::size_t>(grid_w_);
  const std::size_t i00 = iy * w + ix, i10 = iy * w + ix1, i01 = iy1 * w + ix, i11 = iy1 * w + ix1;
  const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
  return {w00 * f.u[i00] + w10 * f.u[i10] + w01 * f.u[i01] + w11 * f.u[i11],
          w00 * f.v[i00] + w10 * f.v[i10] + w01 * f.v[i01] + w11 * f.v[i11]};
}

Eigen::Vector2d DisturbanceField::sample(double x, double y, double t) const {
  const auto b = bracket(t);
  const Eigen::Vector2d lo = sample_frame(frames_[b.lo], x, y);
  if (b.lo == b.hi || b.w_hi == 0.0) return lo;
  const Eigen::Vector2d hi = sample_frame(frames_[b.hi], x, y);
  return (1.0 - b.w_hi) * lo + b.w_hi * hi;
}

FieldJacobian DisturbanceField::jacobian(double x, double y, double t) const {
  return jacobian(x, y, t, 0.5 * cell_size_);
}

FieldJacobian DisturbanceField::jacobian(double x, double y, double t, double step) const {
  const Eigen::Vector2d dx = (sample(x + step, y, t) - sample(x - step, y, t)) / (2.0 * step);
  const Eigen::Vector2d dy = (sample(x, y + step, t) - sample(x, y - step, t)) / (2.0 * step);
  return {dx.x(), dy.x(), dx.y(), dy.y()};
}

void DisturbanceField::raster(double t, std::span<double> u_out, std::span<double> v_out) const {
  const std::size_t n = static_cast<std::size_t>(grid_w_) * grid_h_;
  if (u_out.size() != n || v_out.size() != n) throw ConfigError("raster buffer size mismatch");
  const auto b = bracket(t);
  const auto& lo = frames_[b.lo];
  const auto& hi = frames_[b.hi];
  const double wh = b.w_hi, wl = 1.0 - b.w_hi;
  if (b.lo == b.hi || wh == 0.0) {
    std::copy(lo.u.begin(), lo.u.end(), u_out.begin());
    std::copy(lo.v.begin(), lo.v.end(), v_out.begin());
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    u_out[i] = wl * lo.u[i] + wh * hi.u[i];
    v_out[i] = wl * lo.v[i] + wh * hi.v[i];
  }
}

double DisturbanceField::max_magnitude() const {
  double m = 0.0;
  for (const auto& f : frames_)
    for (std::size_t i = 0; i < f.u.size(); ++i) m = std::max(m, std::hypot(f.u[i], f.v[i]));
  return m;
}

// ---------------------------------------------------------------------------

ObstacleMap::ObstacleMap(int grid_w, int grid_h, double cell_size, bool border)
    : grid_w_(grid_w),
      grid_h_(grid_h),
      cell_size_(cell_size),
      cells_(static_cast<std::size_t>(grid_w) * grid_h, 0) {
  if (!border) return;
  for (int ix = 0; ix < grid_w; ++ix) {
    set(ix, 0, true);
    set(ix, grid_h - 1, true);
  }
  for (int iy = 0; iy < grid_h; ++iy) {
    set(0, iy, true);
    set(grid_w - 1, iy, true);
  }
}

bool ObstacleMap::blocked_cell(int ix, int iy) const {
  if (ix < 0 || iy < 0 || ix >= grid_w_ || iy >= grid_h_) return true;
  return cells_[static_cast<std::size_t>(iy) * grid_w_ + ix] != 0;
}

bool ObstacleMap::blocked(double x, double y) const {
  if (!std::isfinite(x) || !std::isfinite(y)) return true;
  const double fx = std::floor(x / cell_size_), fy = std::floor(y / cell_size_);
  if (fx < 0 || fy < 0 || fx >= grid_w_ || fy >= grid_h_) return true;
  return blocked_cell(static_cast<int>(fx), static_cast<int>(fy));
}

// ---------------------------------------------------------------------------

PatternKind parse_pattern_kind(const std::string& name) {
  if (name == "vortex") return PatternKind::vortex;
  if (name == "meander") return PatternKind::meander;
  if (name == "spin") return PatternKind::spin;
  if (name == "centripetal") return PatternKind::centripetal;
  if (name == "uniform") return PatternKind::uniform;
  throw ConfigError("unknown pattern kind '" + name + "'");
}

std::string to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::vortex: return "vortex";
    case PatternKind::meander: return "meander";
    case PatternKind::spin: return "spin";
    case PatternKind::centripetal: return "centripetal";
    case PatternKind::uniform: return "uniform";
  }
  return "unknown";
}

Eigen::Vector2d CenterPath::at(double t) const {
  if (!(period > 0.0)) return from;
  double phase = std::fmod(t / period, 1.0);
  if (phase < 0) phase += 1.0;
  const double s = phase < 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase;
  return from + s * (to - from);
}

void FieldPatternSpec::validate() const {
  if (!(strength >= 0.0) || !std::isfinite(strength)) throw ConfigError("pattern strength must be >= 0");
  if (!(scale > 0.0)) throw ConfigError("pattern scale must be > 0");
  if (!(noise >= 0.0)) throw ConfigError("pattern noise must be >= 0");
}

Eigen::Vector2d evaluate_pattern(const FieldPatternSpec& spec, double x, double y, double t) {
  const Eigen::Vector2d c = spec.center_path.at(t);
  const double dx = x - c.x(), dy = y - c.y();
  const double r = std::hypot(dx, dy);
  const double s = spec.strength;
  const double L = spec.scale;
  switch (spec.kind) {
    case PatternKind::vortex: {
      if (r == 0.0 || !std::isfinite(L)) return {-s * dy, s * dx};
      const double q = r / L;
      const double speed = s * q * std::exp(0.5 * (1.0 - q * q));
      return {-speed * dy / r, speed * dx / r};
    }
    case PatternKind::centripetal: {
      if (r == 0.0) return {0.0, 0.0};
      const double decay = std::isfinite(L) ? std::exp(-r * r / (2.0 * L * L)) : 1.0;
      return {-s * decay * dx / r, -s * decay * dy / r};
    }
    case PatternKind::spin:
      return {-s * dy, s * dx};
    case PatternKind::meander: {
      const double phase = std::isfinite(L) ? 2.0 * std::numbers::pi * dx / L : 0.0;
      return {s, spec.amplitude * s * std::cos(phase)};
    }
    case PatternKind::uniform:
      return {s * std::cos(spec.direction), s * std::sin(spec.direction)};
  }
  return {0.0, 0.0};
}

DisturbanceField generate(const FieldPatternSpec& spec, int grid_w, int grid_h, int n_frames,
                          double dt_frame, double cell_size, double strength_cap) {
  spec.validate();
  if (grid_w < 4 || grid_h < 4) throw ConfigError("generated grid must be at least 4x4");
  if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
  if (n_frames > 1 && !(dt_frame > 0.0)) throw ConfigError("dt_frame must be > 0");
  const std::size_t n = static_cast<std::size_t>(grid_w) * grid_h;

  std::vector<double> jitter_u(n, 0.0), jitter_v(n, 0.0);
  if (spec.noise > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      jitter_u[i] = spec.noise * spec.strength * dist(rng);
      jitter_v[i] = spec.noise * spec.strength * dist(rng);
    }
  }

  std::vector<FieldFrame> frames(static_cast<std::size_t>(n_frames));
  for (int k = 0; k < n_frames; ++k) {
    auto& f = frames[k];
    f.t = k * dt_frame;
    f.u.resize(n);
    f.v.resize(n);
    for (int iy = 0; iy < grid_h; ++iy) {
      for (int ix = 0; ix < grid_w; ++ix) {
        const std::size_t i = static_cast<std::size_t>(iy) * grid_w + ix;
        const Eigen::Vector2d w =
            evaluate_pattern(spec, (ix + 0.5) * cell_size, (iy + 0.5) * cell_size, f.t);
        f.u[i] = w.x() + jitter_u[i];
        f.v[i] = w.y() + jitter_v[i];
      }
    }
  }
  return DisturbanceField(grid_w, grid_h, cell_size, std::move(frames), strength_cap);
}

DisturbanceField crop(const DisturbanceField& field, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > field.grid_w() || y0 + h > field.grid_h())
    throw ConfigError("crop window out of bounds");
  std::vector<FieldFrame> frames;
  frames.reserve(field.n_frames());
  for (const auto& src : field.frames()) {
    FieldFrame f;
    f.t = src.t;
    f.u.resize(static_cast<std::size_t>(w) * h);
    f.v.resize(f.u.size());
    for (int iy = 0; iy < h; ++iy) {
      for (int ix = 0; ix < w; ++ix) {
        const std::size_t si = static_cast<std::size_t>(iy + y0) * field.grid_w() + (ix + x0);
        const std::size_t di = static_cast<std::size_t>(iy) * w + ix;
        f.u[di] = src.u[si];
        f.v[di] = src.v[si];
      }
    }
    frames.push_back(std::move(f));
  }
  return DisturbanceField(w, h, field.cell_size(), std::move(frames), field.strength_cap());
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCurrentHeader = "t_sec,ix,iy,u_east,v_north";

struct RawCell {
  double u, v;
  std::size_t line;
};

}  // namespace

DisturbanceField ingest_currents(std::istream& in, const CurrentCsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!csv::trim(line).empty()) break;
  }
  if (csv::trim(line) != kCurrentHeader)
    throw ParseError(line_no, std::string("expected header '") + kCurrentHeader + "'");

  // timestamp -> (ix, iy) -> value
  std::map<double, std::map<std::pair<int, int>, RawCell>> grouped;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cols = csv::split(line);
    if (cols.size() != 5) throw ParseError(line_no, "expected 5 columns, got " + std::to_string(cols.size()));
    double t = 0, u = 0, v = 0;
    long long ix = 0, iy = 0;
    try {
      t = csv::parse_number(cols[0]);
      ix = csv::parse_integer(cols[1]);
      iy = csv::parse_integer(cols[2]);
      u = csv::parse_number(cols[3]);
      v = csv::parse_number(cols[4]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
    if (ix < 0 || iy < 0 || ix > 1'000'000 || iy > 1'000'000) throw ParseError(line_no, "cell index out of range");
    auto& frame = grouped[t];
    const auto key = std::make_pair(static_cast<int>(ix), static_cast<int>(iy));
    auto [it, inserted] = frame.emplace(key, RawCell{u, v, line_no});
    if (!inserted && (it->second.u != u || it->second.v != v))
      throw SchemaError("conflicting duplicate for t=" + csv::format_number(t) + " cell (" +
                        std::to_string(ix) + "," + std::to_string(iy) + ") at lines " +
                        std::to_string(it->second.line) + " and " + std::to_string(line_no));
  }
  if (grouped.empty()) throw SchemaError("no data rows");

  int grid_w = -1, grid_h = -1;
  for (const auto& [t, cells] : grouped) {
    int w = 0, h = 0;
    for (const auto& [key, c] : cells) {
      w = std::max(w, key.first + 1);
      h = std::max(h, key.second + 1);
    }
    if (grid_w < 0) {
      grid_w = w;
      grid_h = h;
    } else if (w != grid_w || h != grid_h) {
      throw SchemaError("frame t=" + csv::format_number(t) + " spans " + std::to_string(w) + "x" +
                        std::to_string(h) + " cells, expected " + std::to_string(grid_w) + "x" +
                        std::to_string(grid_h));
    }
  }

  std::vector<FieldFrame> frames;
  const std::size_t n = static_cast<std::size_t>(grid_w) * grid_h;
  for (const auto& [t, cells] : grouped) {
    FieldFrame f;
    f.t = t;
    f.u.assign(n, 0.0);
    f.v.assign(n, 0.0);
    std::vector<char> present(n, 0);
    for (const auto& [key, c] : cells) {
      const std::size_t i = static_cast<std::size_t>(key.second) * grid_w + key.first;
      f.u[i] = c.u;
      f.v[i] = c.v;
      present[i] = 1;
    }
    if (cells.size() < n) {
      // Nearest present cell (squared index distance); ties resolve to the
      // first in row-major order.
      std::vector<std::pair<int, int>> known;
      known.reserve(cells.size());
      for (const auto& [key, c] : cells) known.push_back(key);
      std::sort(known.begin(), known.end(),
                [](auto a, auto b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
      for (int iy = 0; iy < grid_h; ++iy) {
        for (int ix = 0; ix < grid_w; ++ix) {
          const std::size_t i = static_cast<std::size_t>(iy) * grid_w + ix;
          if (present[i]) continue;
          long best = -1;
          std::size_t best_i = 0;
          for (const auto& [kx, ky] : known) {
            const long d = static_cast<long>(kx - ix) * (kx - ix) + static_cast<long>(ky - iy) * (ky - iy);
            if (best < 0 || d < best) {
              best = d;
              best_i = static_cast<std::size_t>(ky) * grid_w + kx;
            }
          }
          f.u[i] = f.u[best_i];
          f.v[i] = f.v[best_i];
        }
      }
    }
    frames.push_back(std::move(f));
  }
  return DisturbanceField(grid_w, grid_h, schema.cell_size, std::move(frames), schema.strength_cap);
}

DisturbanceField ingest_currents(const std::filesystem::path& path, const CurrentCsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open current file " + path.string());
  return ingest_currents(in, schema);
}

void write_currents(const DisturbanceField& field, std::ostream& out) {
  out << kCurrentHeader << '\n';
  for (const auto& f : field.frames()) {
    const std::string t = csv::format_number(f.t);
    for (int iy = 0; iy < field.grid_h(); ++iy) {
      for (int ix = 0; ix < field.grid_w(); ++ix) {
        const std::size_t i = static_cast<std::size_t>(iy) * field.grid_w() + ix;
        out << t << ',' << ix << ',' << iy << ',' << csv::format_number(f.u[i]) << ','
            << csv::format_number(f.v[i]) << '\n';
      }
    }
  }
}

void write_currents(const DisturbanceField& field, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_currents(field, out);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace driftplan
