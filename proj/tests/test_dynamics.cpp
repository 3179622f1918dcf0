#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "driftplan/dynamics.hpp"
#include "driftplan/errors.hpp"

using namespace driftplan;
using std::numbers::pi;

namespace {

DisturbanceField uniform_field(double u, double v, int size = 8) {
  FieldPatternSpec spec;
  spec.kind = PatternKind::uniform;
  spec.strength = std::hypot(u, v);
  spec.direction = std::atan2(v, u);
  return generate(spec, size, size, 1, 1.0, 1.0, 10.0);
}

}  // namespace

TEST_CASE("wrap_angle maps onto (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(pi) == doctest::Approx(pi));
  CHECK(wrap_angle(-pi) == doctest::Approx(pi));
  CHECK(wrap_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
  CHECK(wrap_angle(-3 * pi / 2) == doctest::Approx(pi / 2));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = U(rng), w = wrap_angle(a);
    CHECK(w > -pi);
    CHECK(w <= pi);
    CHECK(std::abs(std::remainder(a - w, 2 * pi)) < 1e-9);
  }
}

TEST_CASE("step examples") {
  const MotionParams p;
  SUBCASE("pure forward motion") {
    const auto s = step({0, 0, 0}, {0.0}, uniform_field(0, 0), 0.0, p);
    CHECK(s.x == 1.0);
    CHECK(s.y == 0.0);
    CHECK(s.theta == 0.0);
  }
  SUBCASE("cross flow adds to the velocity") {
    const auto s = step({2, 2, pi / 2}, {0.0}, uniform_field(0.5, 0), 0.0, p);
    CHECK(s.x == doctest::Approx(2.5));
    CHECK(s.y == doctest::Approx(3.0));
    CHECK(s.theta == doctest::Approx(pi / 2));
  }
  SUBCASE("a half turn lands on the wrap boundary") {
    const auto s = step({0, 0, 0}, {pi}, uniform_field(0, 0), 0.0, p);
    CHECK(s.theta == doctest::Approx(pi));
  }
  SUBCASE("heading stays wrapped") {
    const auto s = step({0, 0, 3.0}, {pi / 4}, uniform_field(0, 0), 0.0, p);
    CHECK(s.theta == doctest::Approx(3.0 + pi / 4 - 2 * pi));
  }
}

TEST_CASE("motion params validation") {
  MotionParams p;
  CHECK_NOTHROW(p.validate());
  p.u_max = 2.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.v = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.dt = -1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("jacobians match the closed-form matrix") {
  MotionParams p;
  p.dt = 0.1;
  const auto j = jacobians({3, 3, 0}, {0.0}, uniform_field(0, 0), 0.0, p);
  Eigen::Matrix3d A;
  A << 1, 0, 0, 0, 1, 0.1, 0, 0, 1;
  CHECK((j.A - A).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((j.B - Eigen::Vector3d(0, 0, 0.1)).norm() < 1e-15);

  FieldPatternSpec spin;
  spin.kind = PatternKind::spin;
  spin.strength = 1.0;
  spin.center_path = CenterPath::fixed({4, 4});
  const auto f = generate(spin, 8, 8, 1, 1.0, 1.0, 100.0);
  const auto js = jacobians({4.2, 3.9, 0.3}, {0.0}, f, 0.0, p);
  CHECK(js.A(0, 1) == doctest::Approx(-0.1));
  CHECK(js.A(1, 0) == doctest::Approx(0.1));
  CHECK(js.A(0, 0) == doctest::Approx(1.0));
  CHECK(js.A(2, 0) == 0.0);
  CHECK(js.A(2, 1) == 0.0);
  CHECK(js.A(2, 2) == 1.0);
  CHECK(js.A(0, 2) == doctest::Approx(-std::sin(0.3) * 0.1));
  CHECK(js.A(1, 2) == doctest::Approx(std::cos(0.3) * 0.1));
}

TEST_CASE("jacobians agree with central differences of step") {
  // Position columns use the field's own stencil half-width (the
  // interpolated field is piecewise bilinear, so only that stencil is
  // comparable); heading and control columns use a small step.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (auto kind : {PatternKind::vortex, PatternKind::meander, PatternKind::spin, PatternKind::centripetal}) {
    FieldPatternSpec spec;
    spec.kind = kind;
    spec.center_path = {{5, 5}, {11, 11}, 40.0};
    spec.strength = kind == PatternKind::spin ? 0.05 : 0.6;
    spec.scale = 4.0;
    const auto f = generate(spec, 16, 16, 6, 10.0);
    const MotionParams p;
    for (int i = 0; i < 100; ++i) {
      const VehicleState s{1 + 14 * U(rng), 1 + 14 * U(rng), (2 * U(rng) - 1) * 3.0};
      const double u = (2 * U(rng) - 1) * p.u_max, t = 60 * U(rng);
      const auto j = jacobians(s, {u}, f, t, p);
      const double hx = f.cell_size() / 2, e = 1e-6;
      auto diff = [&](VehicleState a, VehicleState b, double h) {
        const auto sa = step(a, {u}, f, t, p), sb = step(b, {u}, f, t, p);
        return Eigen::Vector3d((sa.x - sb.x) / (2 * h), (sa.y - sb.y) / (2 * h),
                               wrap_angle(sa.theta - sb.theta) / (2 * h));
      };
      const Eigen::Vector3d cx = diff({s.x + hx, s.y, s.theta}, {s.x - hx, s.y, s.theta}, hx);
      const Eigen::Vector3d cy = diff({s.x, s.y + hx, s.theta}, {s.x, s.y - hx, s.theta}, hx);
      const Eigen::Vector3d ct = diff({s.x, s.y, s.theta + e}, {s.x, s.y, s.theta - e}, e);
      const auto su = step(s, {u + e}, f, t, p), sd = step(s, {u - e}, f, t, p);
      const Eigen::Vector3d cu((su.x - sd.x) / (2 * e), (su.y - sd.y) / (2 * e),
                               wrap_angle(su.theta - sd.theta) / (2 * e));
      CHECK((j.A.col(0) - cx).cwiseAbs().maxCoeff() < 1e-5);
      CHECK((j.A.col(1) - cy).cwiseAbs().maxCoeff() < 1e-5);
      CHECK((j.A.col(2) - ct).cwiseAbs().maxCoeff() < 1e-5);
      CHECK((j.B - cu).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}

TEST_CASE("rollout") {
  const auto f = uniform_field(0, 0, 16);
  const MotionParams p;
  SUBCASE("one control gives two states") {
    const std::vector<ControlInput> c{{0.2}};
    const auto tr = rollout({1, 1, 0.5}, c, f, 3.0, p);
    REQUIRE(tr.states.size() == 2);
    CHECK(tr.states[1] == step({1, 1, 0.5}, {0.2}, f, 3.0, p));
    CHECK(tr.times[1] == 4.0);
  }
  SUBCASE("straight run") {
    const std::vector<ControlInput> c(10, {0.0});
    const auto tr = rollout({0, 0, 0}, c, f, 0.0, p);
    CHECK(tr.states.back().x == 10.0);
    for (std::size_t k = 1; k < tr.states.size(); ++k)
      CHECK((tr.states[k].position() - tr.states[k - 1].position()).norm() == p.v * p.dt);
  }
  SUBCASE("deterministic") {
    FieldPatternSpec spec;
    spec.kind = PatternKind::vortex;
    spec.noise = 0.2;
    const auto g = generate(spec, 16, 16, 2, 5.0);
    std::vector<ControlInput> c;
    for (int k = 0; k < 20; ++k) c.push_back({0.03 * k - 0.3});
    const auto a = rollout({2, 3, 0.1}, c, g, 0.0, p);
    const auto b = rollout({2, 3, 0.1}, c, g, 0.0, p);
    CHECK(a.states == b.states);
  }
  SUBCASE("empty controls") { CHECK_THROWS_AS(rollout({0, 0, 0}, {}, f, 0.0, p), ConfigError); }
}
