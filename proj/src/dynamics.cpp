#include "driftplan/dynamics.hpp"

#include <cmath>

#include "driftplan/errors.hpp"

namespace driftplan {

void MotionParams::validate() const {
  if (!(v > 0.0) || !(dt > 0.0) || !(u_max > 0.0)) throw ConfigError("motion params v, dt, u_max must be > 0");
  if (u_max * dt > std::numbers::pi / 2.0 + 1e-12) throw ConfigError("u_max * dt must not exceed pi/2");
}

double wrap_angle(double theta) {
  double w = std::remainder(theta, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

VehicleState step(const VehicleState& s, ControlInput u, const DisturbanceField& field, double t,
                  const MotionParams& p) {
  const Eigen::Vector2d w = field.sample(s.x, s.y, t);
  return {s.x + (p.v * std::cos(s.theta) + w.x()) * p.dt,
          s.y + (p.v * std::sin(s.theta) + w.y()) * p.dt,
          wrap_angle(s.theta + u.u * p.dt)};
}

DynamicsJacobians jacobians(const VehicleState& s, ControlInput, const DisturbanceField& field,
                            double t, const MotionParams& p) {
  const FieldJacobian j = field.jacobian(s.x, s.y, t);
  DynamicsJacobians d;
  d.A << 1.0 + j.dwx_dx * p.dt, j.dwx_dy * p.dt, -p.v * std::sin(s.theta) * p.dt,
         j.dwy_dx * p.dt, 1.0 + j.dwy_dy * p.dt, p.v * std::cos(s.theta) * p.dt,
         0.0, 0.0, 1.0;
  d.B << 0.0, 0.0, p.dt;
  return d;
}

Trajectory rollout(const VehicleState& s0, std::span<const ControlInput> controls,
                   const DisturbanceField& field, double t0, const MotionParams& p) {
  if (controls.empty()) throw ConfigError("rollout needs at least one control");
  Trajectory traj;
  traj.states.reserve(controls.size() + 1);
  traj.times.reserve(controls.size() + 1);
  traj.controls.assign(controls.begin(), controls.end());
  traj.states.push_back(s0);
  traj.times.push_back(t0);
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const double t = t0 + static_cast<double>(k) * p.dt;
    traj.states.push_back(step(traj.states.back(), controls[k], field, t, p));
    traj.times.push_back(t0 + static_cast<double>(k + 1) * p.dt);
  }
  return traj;
}

}  // namespace driftplan
