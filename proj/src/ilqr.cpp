#include "driftplan/ilqr.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "driftplan/errors.hpp"

namespace driftplan {

Eigen::Vector3d FieldDynamics::next(const Eigen::Vector3d& s, double u, double t) const {
  return step(VehicleState::from(s), ControlInput{u}, field_, t, params_).vec();
}

DynamicsJacobians FieldDynamics::linearize(const Eigen::Vector3d& s, double u, double t) const {
  return jacobians(VehicleState::from(s), ControlInput{u}, field_, t, params_);
}

Eigen::Vector3d FieldDynamics::difference(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const {
  Eigen::Vector3d d = a - b;
  d.z() = wrap_angle(d.z());
  return d;
}

Eigen::Vector3d QuadraticCost::error(const Eigen::Vector3d& s) const {
  Eigen::Vector3d e = s - goal;
  if (wrap_heading) e.z() = wrap_angle(e.z());
  return e;
}

void QuadraticCost::validate() const {
  if (!(rho > 0.0)) throw ConfigError("rho must be > 0");
  for (const auto* W : {&W_p, &W_f}) {
    if (!W->isApprox(W->transpose(), 1e-12)) throw ConfigError("cost weights must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(*W, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12) throw ConfigError("cost weights must be PSD");
  }
}

void ILQRConfig::validate() const {
  if (horizon < 1) throw ConfigError("iLQR horizon must be >= 1");
  if (max_iters < 1) throw ConfigError("iLQR max_iters must be >= 1");
  if (!(cost_tol > 0.0)) throw ConfigError("iLQR cost_tol must be > 0");
  if (!(mu_init >= 0.0) || !(mu_factor > 1.0) || !(mu_decrease > 1.0))
    throw ConfigError("invalid iLQR regularization schedule");
  if (linesearch_alphas.empty()) throw ConfigError("iLQR needs at least one line-search step");
}

Trajectory ILQRSolution::trajectory(double t0, double dt) const {
  Trajectory traj;
  for (std::size_t k = 0; k < states.size(); ++k) {
    traj.states.push_back(VehicleState::from(states[k]));
    traj.times.push_back(t0 + static_cast<double>(k) * dt);
  }
  for (double u : controls) traj.controls.push_back({u});
  return traj;
}

double total_cost(std::span<const Eigen::Vector3d> states, std::span<const double> controls,
                  const QuadraticCost& cost) {
  if (states.size() != controls.size() + 1) throw ConfigError("total_cost: need N+1 states for N controls");
  double J = 0.0;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const Eigen::Vector3d e = cost.error(states[k]);
    J += 0.5 * (e.dot(cost.W_p * e) + cost.rho * controls[k] * controls[k]);
  }
  const Eigen::Vector3d eN = cost.error(states.back());
  J += 0.5 * eN.dot(cost.W_f * eN);
  return J;
}

std::optional<BackwardPass> backward_pass(std::span<const Eigen::Vector3d> states,
                                          std::span<const double> controls,
                                          const DynamicsProvider& dyn, double t0,
                                          const QuadraticCost& cost, double mu) {
  const std::size_t N = controls.size();
  BackwardPass out;
  out.gains.resize(N);

  // Value function expansion V(s_k + ds) ~ m' ds + 1/2 ds' M ds.
  Eigen::Matrix3d M = cost.W_f;
  Eigen::Vector3d m = cost.W_f * cost.error(states[N]);

  for (std::size_t i = N; i-- > 0;) {
    const double t = t0 + static_cast<double>(i) * dyn.dt();
    const DynamicsJacobians F = dyn.linearize(states[i], controls[i], t);
    const Eigen::Vector3d e = cost.error(states[i]);

    const Eigen::Vector3d q_s = cost.W_p * e + F.A.transpose() * m;
    const double q_u = cost.rho * controls[i] + F.B.dot(m);
    const Eigen::Matrix3d Q_ss = cost.W_p + F.A.transpose() * M * F.A;
    const Eigen::RowVector3d Q_us = F.B.transpose() * M * F.A;
    const double Q_uu = cost.rho + F.B.dot(M * F.B);

    const double Q_uu_reg = Q_uu + mu;
    if (!(Q_uu_reg > 0.0)) return std::nullopt;

    FeedbackGain& g = out.gains[i];
    g.K = -Q_us / Q_uu_reg;
    g.k = -q_u / Q_uu_reg;

    out.d1 += g.k * q_u;
    out.d2 += 0.5 * g.k * g.k * Q_uu;

    // General form; reduces to M = Q_ss - K' Q_uu K when mu = 0.
    M = Q_ss + g.K.transpose() * Q_uu * g.K + g.K.transpose() * Q_us + Q_us.transpose() * g.K;
    M = 0.5 * (M + M.transpose());
    m = q_s + g.K.transpose() * (Q_uu * g.k) + g.K.transpose() * q_u + Q_us.transpose() * g.k;
  }
  return out;
}

ForwardPass forward_pass(std::span<const Eigen::Vector3d> states, std::span<const double> controls,
                         std::span<const FeedbackGain> gains, double alpha,
                         const DynamicsProvider& dyn, double t0) {
  const std::size_t N = controls.size();
  const double u_max = dyn.u_max();
  ForwardPass out;
  out.states.resize(N + 1);
  out.controls.resize(N);
  out.states[0] = states[0];
  for (std::size_t i = 0; i < N; ++i) {
    const Eigen::Vector3d ds = dyn.difference(out.states[i], states[i]);
    double u = controls[i] + gains[i].K.dot(ds) + alpha * gains[i].k;
    u = std::clamp(u, -u_max, u_max);
    out.controls[i] = u;
    out.states[i + 1] = dyn.next(out.states[i], u, t0 + static_cast<double>(i) * dyn.dt());
  }
  return out;
}

std::vector<Eigen::Vector3d> rollout_states(const Eigen::Vector3d& s0, std::span<const double> controls,
                                            const DynamicsProvider& dyn, double t0) {
  std::vector<Eigen::Vector3d> states(controls.size() + 1);
  states[0] = s0;
  for (std::size_t i = 0; i < controls.size(); ++i)
    states[i + 1] = dyn.next(states[i], controls[i], t0 + static_cast<double>(i) * dyn.dt());
  return states;
}

std::vector<double> heading_warm_start(const Eigen::Vector3d& s0, const Eigen::Vector2d& goal,
                                       const DynamicsProvider& dyn, double t0, int horizon,
                                       double gain) {
  std::vector<double> controls(static_cast<std::size_t>(horizon));
  Eigen::Vector3d s = s0;
  const double u_max = dyn.u_max();
  for (int i = 0; i < horizon; ++i) {
    const Eigen::Vector2d d = goal - s.head<2>();
    double u = 0.0;
    if (d.norm() > 1e-9) {
      const double err = wrap_angle(std::atan2(d.y(), d.x()) - s.z());
      u = std::clamp(gain * err / dyn.dt(), -u_max, u_max);
    }
    controls[static_cast<std::size_t>(i)] = u;
    s = dyn.next(s, u, t0 + i * dyn.dt());
  }
  return controls;
}

ILQRSolution solve(const Eigen::Vector3d& s0, const DynamicsProvider& dyn, double t0,
                   const QuadraticCost& cost, const ILQRConfig& cfg,
                   std::vector<double> initial_controls) {
  cfg.validate();
  cost.validate();
  if (initial_controls.size() != static_cast<std::size_t>(cfg.horizon))
    throw ConfigError("initial control sequence must have horizon length");

  ILQRSolution sol;
  const double u_max = dyn.u_max();
  for (double& u : initial_controls) u = std::clamp(u, -u_max, u_max);
  sol.controls = std::move(initial_controls);
  sol.states = rollout_states(s0, sol.controls, dyn, t0);
  sol.total_cost = total_cost(sol.states, sol.controls, cost);
  if (!std::isfinite(sol.total_cost)) throw SolverError(0, "initial cost is not finite");
  sol.cost_history.push_back(sol.total_cost);
  sol.gains.assign(sol.controls.size(), FeedbackGain{});

  double mu = cfg.mu_init;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    sol.iterations = iter;

    std::optional<BackwardPass> bp;
    while (!(bp = backward_pass(sol.states, sol.controls, dyn, t0, cost, mu))) {
      mu = std::max(mu * cfg.mu_factor, cfg.mu_min);
      if (mu > cfg.mu_max) return sol;
    }

    // Nothing left to gain: the predicted decrease is negligible.
    if (-bp->expected(1.0) <= cfg.cost_tol * std::max(sol.total_cost, 1e-12) || sol.total_cost == 0.0) {
      sol.gains = bp->gains;
      sol.converged = true;
      return sol;
    }

    bool accepted = false;
    for (double alpha : cfg.linesearch_alphas) {
      ForwardPass fp = forward_pass(sol.states, sol.controls, bp->gains, alpha, dyn, t0);
      const double J = total_cost(fp.states, fp.controls, cost);
      if (!std::isfinite(J)) throw SolverError(iter, "cost became non-finite");
      if (J < sol.total_cost) {
        const double rel = (sol.total_cost - J) / std::max(sol.total_cost, 1e-300);
        sol.states = std::move(fp.states);
        sol.controls = std::move(fp.controls);
        sol.gains = bp->gains;
        sol.total_cost = J;
        sol.cost_history.push_back(J);
        accepted = true;
        mu /= cfg.mu_decrease;
        if (mu < cfg.mu_min) mu = 0.0;
        if (rel < cfg.cost_tol) {
          sol.converged = true;
          return sol;
        }
        break;
      }
    }
    if (!accepted) {
      mu = std::max(mu * cfg.mu_factor, cfg.mu_min);
      if (mu > cfg.mu_max) return sol;
    }
  }
  return sol;
}

ILQRSolution solve(const VehicleState& s0, const Eigen::Vector2d& goal, const DisturbanceField& field,
                   double t0, const MotionParams& p, const QuadraticCost& cost, const ILQRConfig& cfg) {
  p.validate();
  FieldDynamics dyn(field, p);
  QuadraticCost c = cost;
  c.goal = Eigen::Vector3d(goal.x(), goal.y(), cost.goal.z());
  auto warm = heading_warm_start(s0.vec(), goal, dyn, t0, cfg.horizon);
  return solve(s0.vec(), dyn, t0, c, cfg, std::move(warm));
}

}  // namespace driftplan
