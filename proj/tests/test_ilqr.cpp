#include <doctest.h>

#include <cmath>
#include <random>

#include "driftplan/errors.hpp"
#include "driftplan/ilqr.hpp"
#include "oracles.hpp"

using namespace driftplan;

namespace {

DisturbanceField uniform_field(double u, double v, int size = 32) {
  FieldPatternSpec spec;
  spec.kind = PatternKind::uniform;
  spec.strength = std::hypot(u, v);
  spec.direction = std::atan2(v, u);
  return generate(spec, size, size, 1, 1.0, 1.0, 10.0);
}

struct LinearCase {
  Eigen::Matrix3d A;
  Eigen::Vector3d B;
  QuadraticCost cost;
  Eigen::Vector3d s0;
};

LinearCase linear_case() {
  LinearCase c;
  c.A << 1.0, 0.1, 0.0, 0.0, 1.0, 0.1, 0.05, 0.0, 0.95;
  c.B << 0.0, 0.05, 0.1;
  c.cost.wrap_heading = false;
  c.cost.W_p = Eigen::Vector3d(1.0, 0.5, 0.2).asDiagonal();
  c.cost.W_f = Eigen::Vector3d(2.0, 2.0, 1.0).asDiagonal();
  c.cost.rho = 0.1;
  c.cost.goal = Eigen::Vector3d(2.0, -1.0, 0.0);
  c.s0 = Eigen::Vector3d(0.0, 0.0, 0.3);
  return c;
}

// NaN once the state leaves a small box.
class ExplodingDynamics final : public DynamicsProvider {
 public:
  Eigen::Vector3d next(const Eigen::Vector3d& s, double u, double) const override {
    Eigen::Vector3d n = s + Eigen::Vector3d(0.0, 0.0, u);
    if (std::abs(n.z()) > 0.5) n.x() = std::nan("");
    return n;
  }
  DynamicsJacobians linearize(const Eigen::Vector3d&, double, double) const override {
    return {Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1)};
  }
  double dt() const override { return 1.0; }
};

}  // namespace

TEST_CASE("total cost examples") {
  QuadraticCost c;
  c.goal = Eigen::Vector3d(3, 4, 0);
  SUBCASE("all at goal with zero controls") {
    std::vector<Eigen::Vector3d> s(5, c.goal);
    std::vector<double> u(4, 0.0);
    CHECK(total_cost(s, u, c) == 0.0);
  }
  SUBCASE("single step with control effort") {
    c.rho = 0.5;
    std::vector<Eigen::Vector3d> s(2, c.goal);
    std::vector<double> u{2.0};
    CHECK(total_cost(s, u, c) == doctest::Approx(1.0));
  }
  SUBCASE("terminal heading mismatch is free") {
    std::vector<Eigen::Vector3d> s{c.goal, Eigen::Vector3d(3, 4, 2.5)};
    std::vector<double> u{0.0};
    CHECK(total_cost(s, u, c) == 0.0);
  }
  SUBCASE("position error is goal relative") {
    std::vector<Eigen::Vector3d> s{Eigen::Vector3d(3, 5, 0), Eigen::Vector3d(5, 4, 0)};
    std::vector<double> u{0.0};
    CHECK(total_cost(s, u, c) == doctest::Approx(0.5 + 2.0));
  }
  SUBCASE("length mismatch") {
    std::vector<Eigen::Vector3d> s(3, c.goal);
    std::vector<double> u(1, 0.0);
    CHECK_THROWS_AS(total_cost(s, u, c), ConfigError);
  }
}

TEST_CASE("one-step gain equals the closed-form LQR gain") {
  Eigen::Matrix3d A = 0.9 * Eigen::Matrix3d::Identity();
  A(0, 2) = 0.3;
  const Eigen::Vector3d B(0.5, 0.2, 1.0);
  const LinearDynamics dyn(A, B);
  QuadraticCost cost;
  cost.wrap_heading = false;
  cost.W_f = Eigen::Vector3d(2.0, 3.0, 4.0).asDiagonal();
  cost.rho = 0.7;
  std::vector<Eigen::Vector3d> states{Eigen::Vector3d(1, 2, 3)};
  std::vector<double> controls{0.0};
  states.push_back(A * states[0]);
  const auto bp = backward_pass(states, controls, dyn, 0.0, cost, 0.0);
  REQUIRE(bp);
  const Eigen::RowVector3d expected = -(B.transpose() * cost.W_f * A) / (cost.rho + B.dot(cost.W_f * B));
  CHECK((bp->gains[0].K - expected).norm() < 1e-12);
}

TEST_CASE("backward pass at the optimum has zero feedforward") {
  const auto f = uniform_field(0, 0);
  const FieldDynamics dyn(f, MotionParams{});
  QuadraticCost cost;
  cost.goal = Eigen::Vector3d(10, 10, 0);
  // stationary only in the sense of zero gradient: start at goal, v moves it away,
  // so use a provider with no drift instead
  const LinearDynamics still(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1));
  std::vector<double> u(10, 0.0);
  const auto s = rollout_states(cost.goal, u, still, 0.0);
  const auto bp = backward_pass(s, u, still, 0.0, cost, 0.0);
  REQUIRE(bp);
  for (const auto& g : bp->gains) CHECK(std::abs(g.k) < 1e-15);
  CHECK(bp->expected(1.0) == 0.0);
  (void)dyn;
}

TEST_CASE("backward pass reports non-positive curvature") {
  const LinearDynamics dyn(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1));
  QuadraticCost cost;
  cost.rho = 1e-9;
  std::vector<double> u(3, 0.0);
  const auto s = rollout_states(Eigen::Vector3d(1, 1, 0), u, dyn, 0.0);
  CHECK(backward_pass(s, u, dyn, 0.0, cost, 0.0));
  CHECK_FALSE(backward_pass(s, u, dyn, 0.0, cost, -1.0));
}

TEST_CASE("forward pass fixed point and open-loop shift") {
  const auto f = uniform_field(0.2, -0.1);
  const FieldDynamics dyn(f, MotionParams{});
  const Eigen::Vector3d s0(5, 5, 0.2);
  std::vector<double> u{0.1, -0.2, 0.05, 0.0, 0.3};
  const auto s = rollout_states(s0, u, dyn, 0.0);
  std::vector<FeedbackGain> gains(u.size());
  for (auto& g : gains) g.K = Eigen::RowVector3d(0.3, -0.2, 0.5);
  SUBCASE("alpha 0") {
    const auto fp = forward_pass(s, u, gains, 0.0, dyn, 0.0);
    CHECK(fp.controls == u);
    CHECK(fp.states == s);
  }
  SUBCASE("constant feedforward") {
    for (auto& g : gains) {
      g.K.setZero();
      g.k = 0.1;
    }
    const auto fp = forward_pass(s, u, gains, 1.0, dyn, 0.0);
    for (std::size_t k = 0; k < u.size(); ++k) CHECK(fp.controls[k] == doctest::Approx(u[k] + 0.1));
  }
  SUBCASE("controls clamp to the bound") {
    for (auto& g : gains) {
      g.K.setZero();
      g.k = 5.0;
    }
    const auto fp = forward_pass(s, u, gains, 1.0, dyn, 0.0);
    for (double c : fp.controls) CHECK(c == doctest::Approx(MotionParams{}.u_max));
  }
}

TEST_CASE("linear-quadratic solve matches the Riccati oracle") {
  const auto c = linear_case();
  const LinearDynamics dyn(c.A, c.B);
  ILQRConfig cfg;
  cfg.horizon = 25;
  const auto sol = solve(c.s0, dyn, 0.0, c.cost, cfg, std::vector<double>(25, 0.0));
  const auto ref = oracle::riccati(c.A, c.B, c.cost.W_p, c.cost.W_f, c.cost.rho, c.cost.goal, c.s0, 25);
  CHECK(sol.converged);
  CHECK(sol.iterations <= 2);
  double du = 0.0;
  for (int k = 0; k < 25; ++k) du = std::max(du, std::abs(sol.controls[k] - ref.controls[k]));
  CHECK(du < 1e-6);
  CHECK(std::abs(sol.total_cost - ref.cost) < 1e-8);
}

TEST_CASE("solve on trivial and geometric instances") {
  const MotionParams p;
  QuadraticCost cost;
  ILQRConfig cfg;
  SUBCASE("start at goal with a stationary provider") {
    const LinearDynamics still(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1));
    cost.goal = Eigen::Vector3d(4, 4, 0);
    const auto sol = solve(cost.goal, still, 0.0, cost, cfg, std::vector<double>(40, 0.0));
    CHECK(sol.converged);
    CHECK(sol.total_cost < 1e-9);
    for (double u : sol.controls) CHECK(std::abs(u) < 1e-9);
  }
  SUBCASE("goal straight ahead in still water") {
    const auto f = uniform_field(0, 0);
    cfg.horizon = 12;  // v * N * dt just covers the distance
    const auto sol = solve({2, 10, 0.1}, {14, 10}, f, 0.0, p, cost, cfg);
    CHECK((sol.states.back().head<2>() - Eigen::Vector2d(14, 10)).norm() < 0.5);
  }
  SUBCASE("cross flow beats the naive heading controller") {
    const auto f = uniform_field(0, 0.5);
    cfg.horizon = 30;
    const VehicleState s0{4, 10, 0};
    const Eigen::Vector2d goal(16, 10);
    const auto sol = solve(s0, goal, f, 0.0, p, cost, cfg);
    double best = 1e9;
    for (const auto& s : sol.states) best = std::min(best, (s.head<2>() - goal).norm());
    CHECK(best < 1.0);
    const FieldDynamics dyn(f, p);
    const auto naive_u = heading_warm_start(s0.vec(), goal, dyn, 0.0, cfg.horizon);
    QuadraticCost c = cost;
    c.goal = Eigen::Vector3d(goal.x(), goal.y(), 0);
    const double naive = total_cost(rollout_states(s0.vec(), naive_u, dyn, 0.0), naive_u, c);
    CHECK(sol.total_cost < naive);
  }
}

TEST_CASE("accepted iterations never increase the cost") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const PatternKind kinds[] = {PatternKind::vortex, PatternKind::meander, PatternKind::spin,
                               PatternKind::centripetal};
  for (int i = 0; i < 20; ++i) {
    FieldPatternSpec spec;
    spec.kind = kinds[i % 4];
    spec.center_path = CenterPath::fixed({4 + 16 * U(rng), 4 + 16 * U(rng)});
    spec.strength = spec.kind == PatternKind::spin ? 0.04 * U(rng) : 0.8 * U(rng);
    const auto f = generate(spec, 24, 24, 1, 1.0);
    const VehicleState s0{2 + 20 * U(rng), 2 + 20 * U(rng), (2 * U(rng) - 1) * 3};
    const Eigen::Vector2d goal(2 + 20 * U(rng), 2 + 20 * U(rng));
    const auto sol = solve(s0, goal, f, 0.0, MotionParams{}, QuadraticCost{}, ILQRConfig{});
    for (std::size_t k = 1; k < sol.cost_history.size(); ++k) CHECK(sol.cost_history[k] <= sol.cost_history[k - 1]);
    CHECK(std::isfinite(sol.total_cost));
    CHECK(sol.gains.size() == sol.controls.size());
    CHECK(sol.states.size() == sol.controls.size() + 1);
  }
}

TEST_CASE("predicted and realized decrease agree near convergence") {
  FieldPatternSpec spec;
  spec.kind = PatternKind::vortex;
  spec.center_path = CenterPath::fixed({12, 12});
  spec.strength = 0.2;
  const auto f = generate(spec, 24, 24, 1, 1.0);
  const MotionParams p;
  const FieldDynamics dyn(f, p);
  // Terminal-only cost with a reachable goal: the optimal residuals vanish, so
  // the Gauss-Newton model drops nothing and the quadratic prediction should
  // hold. With a running position cost the residuals stay large under
  // constant speed and the neglected dynamics curvature dominates.
  QuadraticCost cost;
  cost.goal = Eigen::Vector3d(14, 12, 0);
  cost.W_p.setZero();
  const Eigen::Vector3d s0(5, 6, 0.5);
  const auto warm = heading_warm_start(s0, cost.goal.head<2>(), dyn, 0.0, 14);
  int checked = 0;
  for (int iters = 1; iters <= 30; ++iters) {
    ILQRConfig cfg;
    cfg.max_iters = iters;
    cfg.horizon = 14;
    cfg.cost_tol = 1e-12;
    const auto sol = solve(s0, dyn, 0.0, cost, cfg, warm);
    const auto bp = backward_pass(sol.states, sol.controls, dyn, 0.0, cost, 0.0);
    if (!bp) continue;
    const double predicted = bp->expected(1.0);
    // near converged: predicted change is a small fraction of the cost
    if (!(predicted < 0.0) || -predicted > 1e-2 * sol.total_cost || -predicted < 1e-6 * sol.total_cost) continue;
    const auto fp = forward_pass(sol.states, sol.controls, bp->gains, 1.0, dyn, 0.0);
    const double realized = total_cost(fp.states, fp.controls, cost) - sol.total_cost;
    CAPTURE(iters);
    CAPTURE(realized);
    CAPTURE(predicted);
    CHECK(realized / predicted >= 0.1);
    CHECK(realized / predicted <= 10.0);
    ++checked;
  }
  CHECK(checked >= 1);
}

TEST_CASE("non-finite cost raises a solver error with the iteration") {
  const ExplodingDynamics dyn;
  QuadraticCost cost;
  cost.goal = Eigen::Vector3d(0, 0, 3.0);
  cost.W_p = Eigen::Vector3d(1, 1, 1).asDiagonal();
  cost.W_f = cost.W_p;
  cost.wrap_heading = false;
  ILQRConfig cfg;
  cfg.horizon = 5;
  try {
    solve(Eigen::Vector3d::Zero(), dyn, 0.0, cost, cfg, std::vector<double>(5, 0.0));
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.iteration() >= 1);
  }
}

TEST_CASE("config validation") {
  ILQRConfig cfg;
  cfg.horizon = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.cost_tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  QuadraticCost c;
  c.rho = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.W_p(0, 1) = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // not symmetric
}
