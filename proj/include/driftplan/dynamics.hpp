#pragma once

// Planar constant-speed vehicle (Dubins car) advected by a disturbance field,
// integrated with explicit Euler:
//
//   x' = x + (v cos(theta) + wx(x, y, t)) dt
//   y' = y + (v sin(theta) + wy(x, y, t)) dt
//   theta' = wrap(theta + u dt)

#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "driftplan/field.hpp"

namespace driftplan {

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // (-pi, pi]

  Eigen::Vector2d position() const { return {x, y}; }
  Eigen::Vector3d vec() const { return {x, y, theta}; }
  static VehicleState from(const Eigen::Vector3d& s) { return {s.x(), s.y(), s.z()}; }
  bool operator==(const VehicleState&) const = default;
};

struct ControlInput {
  double u = 0.0;  // angular rate (rad/s)
  bool operator==(const ControlInput&) const = default;
};

struct MotionParams {
  double v = 1.0;
  double dt = 1.0;
  double u_max = std::numbers::pi / 4.0;

  // Requires v, dt, u_max > 0 and u_max * dt <= pi / 2 (keeps one step well
  // inside the heading wrap so the linearization stays valid).
  void validate() const;
};

struct DynamicsJacobians {
  Eigen::Matrix3d A;  // df/ds
  Eigen::Vector3d B;  // df/du
};

struct Trajectory {
  std::vector<VehicleState> states;  // N + 1
  std::vector<ControlInput> controls;  // N
  std::vector<double> times;  // N + 1
};

double wrap_angle(double theta);

VehicleState step(const VehicleState& s, ControlInput u, const DisturbanceField& field, double t,
                  const MotionParams& p);

DynamicsJacobians jacobians(const VehicleState& s, ControlInput u, const DisturbanceField& field,
                            double t, const MotionParams& p);

Trajectory rollout(const VehicleState& s0, std::span<const ControlInput> controls,
                   const DisturbanceField& field, double t0, const MotionParams& p);

}  // namespace driftplan
