#pragma once

// Iterative LQR for the disturbed Dubins vehicle.
//
// Cost (goal-relative error e_k = s_k - s_f):
//   J = sum_{k<N} 1/2 (e_k' Wp e_k + rho u_k^2) + 1/2 e_N' Wf e_N
//
// Each iteration linearizes the dynamics about the current trajectory, runs
// the Riccati-style backward sweep for (K_k, k_k), then a backtracking forward
// rollout u_k <- u_k + K_k (s_new_k - s_k) + alpha k_k on the nonlinear model.

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "driftplan/dynamics.hpp"
#include "driftplan/field.hpp"

namespace driftplan {

// Source of next-state and linearization for the solver. The field-driven
// vehicle is the normal implementation; tests swap in linear systems.
class DynamicsProvider {
 public:
  virtual ~DynamicsProvider() = default;
  virtual Eigen::Vector3d next(const Eigen::Vector3d& s, double u, double t) const = 0;
  virtual DynamicsJacobians linearize(const Eigen::Vector3d& s, double u, double t) const = 0;
  virtual double dt() const = 0;
  virtual double u_max() const { return std::numeric_limits<double>::infinity(); }
  // a - b in the state's tangent space.
  virtual Eigen::Vector3d difference(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const { return a - b; }
};

class FieldDynamics final : public DynamicsProvider {
 public:
  FieldDynamics(const DisturbanceField& field, MotionParams params) : field_(field), params_(params) {}
  Eigen::Vector3d next(const Eigen::Vector3d& s, double u, double t) const override;
  DynamicsJacobians linearize(const Eigen::Vector3d& s, double u, double t) const override;
  double dt() const override { return params_.dt; }
  double u_max() const override { return params_.u_max; }
  Eigen::Vector3d difference(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const override;

 private:
  const DisturbanceField& field_;
  MotionParams params_;
};

// s' = A s + B u, time invariant.
class LinearDynamics final : public DynamicsProvider {
 public:
  LinearDynamics(Eigen::Matrix3d A, Eigen::Vector3d B, double dt = 1.0) : A_(A), B_(B), dt_(dt) {}
  Eigen::Vector3d next(const Eigen::Vector3d& s, double u, double) const override { return A_ * s + B_ * u; }
  DynamicsJacobians linearize(const Eigen::Vector3d&, double, double) const override { return {A_, B_}; }
  double dt() const override { return dt_; }

 private:
  Eigen::Matrix3d A_;
  Eigen::Vector3d B_;
  double dt_;
};

struct QuadraticCost {
  Eigen::Matrix3d W_p = Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal();
  Eigen::Matrix3d W_f = Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal();
  double rho = 0.1;
  Eigen::Vector3d goal = Eigen::Vector3d::Zero();
  bool wrap_heading = true;  // wrap the theta component of the error

  Eigen::Vector3d error(const Eigen::Vector3d& s) const;
  void validate() const;
};

struct ILQRConfig {
  int horizon = 40;
  int max_iters = 50;
  double cost_tol = 1e-6;  // relative decrease below which the solve stops
  double mu_init = 0.0;
  double mu_factor = 10.0;  // raise on rejection
  double mu_decrease = 2.0;  // lower on acceptance
  double mu_min = 1e-6;  // values below this snap to zero
  double mu_max = 1e10;
  std::vector<double> linesearch_alphas{1.0, 0.5, 0.25, 0.1, 0.05};

  void validate() const;
};

struct FeedbackGain {
  Eigen::RowVector3d K = Eigen::RowVector3d::Zero();
  double k = 0.0;
};

struct BackwardPass {
  std::vector<FeedbackGain> gains;
  // Predicted change for step size alpha: alpha * d1 + alpha^2 * d2.
  double d1 = 0.0;
  double d2 = 0.0;
  double expected(double alpha) const { return alpha * d1 + alpha * alpha * d2; }
};

struct ForwardPass {
  std::vector<Eigen::Vector3d> states;
  std::vector<double> controls;
};

struct ILQRSolution {
  std::vector<Eigen::Vector3d> states;  // N + 1
  std::vector<double> controls;  // N
  std::vector<FeedbackGain> gains;  // N
  double total_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_history;  // initial cost, then one entry per accepted iteration

  Trajectory trajectory(double t0, double dt) const;
};

double total_cost(std::span<const Eigen::Vector3d> states, std::span<const double> controls,
                  const QuadraticCost& cost);

// Returns nullopt when Q_uu + mu is not positive at some step.
std::optional<BackwardPass> backward_pass(std::span<const Eigen::Vector3d> states,
                                          std::span<const double> controls,
                                          const DynamicsProvider& dyn, double t0,
                                          const QuadraticCost& cost, double mu);

ForwardPass forward_pass(std::span<const Eigen::Vector3d> states, std::span<const double> controls,
                         std::span<const FeedbackGain> gains, double alpha,
                         const DynamicsProvider& dyn, double t0);

std::vector<Eigen::Vector3d> rollout_states(const Eigen::Vector3d& s0, std::span<const double> controls,
                                            const DynamicsProvider& dyn, double t0);

// Proportional turn-toward-goal controller rolled out for `horizon` steps;
// used as the warm start.
std::vector<double> heading_warm_start(const Eigen::Vector3d& s0, const Eigen::Vector2d& goal,
                                       const DynamicsProvider& dyn, double t0, int horizon,
                                       double gain = 1.0);

ILQRSolution solve(const Eigen::Vector3d& s0, const DynamicsProvider& dyn, double t0,
                   const QuadraticCost& cost, const ILQRConfig& cfg,
                   std::vector<double> initial_controls);

// Field-driven solve with the heading warm start.
ILQRSolution solve(const VehicleState& s0, const Eigen::Vector2d& goal, const DisturbanceField& field,
                   double t0, const MotionParams& p, const QuadraticCost& cost, const ILQRConfig& cfg);

}  // namespace driftplan
