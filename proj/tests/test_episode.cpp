#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include "driftplan/controllers.hpp"
#include "driftplan/errors.hpp"
#include "driftplan/episode.hpp"

using namespace driftplan;
using std::numbers::pi;

namespace {

std::shared_ptr<const DisturbanceField> zero_field(int size, double cell_size = 1.0) {
  FieldPatternSpec spec;
  spec.kind = PatternKind::uniform;
  spec.strength = 0.0;
  return std::make_shared<const DisturbanceField>(generate(spec, size, size, 1, 1.0, cell_size));
}

TrialResult fake(bool success, double time, int steps) {
  TrialResult r;
  r.success = success;
  r.time_cost = time;
  r.step_cost = steps;
  return r;
}

}  // namespace

TEST_CASE("start next to the goal succeeds under any controller") {
  EnvSpec env;
  env.field = zero_field(10);
  env.start = Eigen::Vector2d(4.5, 4.5);
  env.goal = Eigen::Vector2d(5.5, 4.5);
  const double um = env.motion.u_max;
  auto weights = std::make_shared<const PolicyWeights>(PolicyWeights::initialized([] {
    auto c = PolicyConfig::tiny();
    c.grid_w = c.grid_h = 16;
    return c;
  }(), 1));
  std::vector<std::unique_ptr<Controller>> controllers;
  controllers.push_back(std::make_unique<ConstantController>(0.0));
  controllers.push_back(std::make_unique<ConstantController>(um));
  controllers.push_back(std::make_unique<ConstantController>(-um));
  controllers.push_back(std::make_unique<HeadingController>());
  controllers.push_back(std::make_unique<IlqrController>(RecedingHorizonConfig{}));
  for (auto& c : controllers) {
    Rng rng(1);
    const auto r = run_trial(env, *c, rng);
    CHECK(r.success);
    CHECK(r.step_cost <= 2);
    CHECK((r.path.states.back().position() - *env.goal).norm() < env.success_radius);
  }
  SUBCASE("policy controller on a matching grid") {
    EnvSpec big = env;
    big.field = zero_field(16);
    PolicyController pc(weights, ActionSelection::sample);
    Rng rng(2);
    const auto r = run_trial(big, pc, rng);
    CHECK(r.success);
    CHECK(r.step_cost <= 2);
    CHECK(r.method == Method::drl);
  }
}

TEST_CASE("holding u = 0 pointed away times out at the step cap") {
  // 800 x 800 world: 300 straight steps stay clear of the border.
  EnvSpec env;
  env.field = zero_field(8, 100.0);
  env.start = Eigen::Vector2d(600, 400);
  env.goal = Eigen::Vector2d(610, 400);
  env.start_heading = pi;
  ConstantController c(0.0);
  Rng rng(1);
  const auto r = run_trial(env, c, rng);
  CHECK_FALSE(r.success);
  CHECK(r.status == TrialStatus::timeout);
  CHECK(r.ticks == 300);
  CHECK(r.time_cost == 300.0);
  CHECK(r.step_cost == 3);
  CHECK(r.path.states.back().x == doctest::Approx(300.0));
}

TEST_CASE("driving into the border is a collision") {
  EnvSpec env;
  env.field = zero_field(10);
  env.start = Eigen::Vector2d(2.5, 5.0);
  env.goal = Eigen::Vector2d(8.0, 5.0);
  env.start_heading = pi;
  ConstantController c(0.0);
  Rng rng(1);
  const auto r = run_trial(env, c, rng);
  CHECK(r.status == TrialStatus::collision);
  CHECK_FALSE(r.success);
  CHECK(r.ticks == 2);
}

TEST_CASE("time cost is ticks times dt and step cost counts cell crossings") {
  EnvSpec env;
  env.field = zero_field(20);
  env.start = Eigen::Vector2d(2.25, 2.5);
  env.goal = Eigen::Vector2d(7.25, 2.5);
  env.motion.dt = 0.5;
  ConstantController c(0.0);
  Rng rng(1);
  const auto r = run_trial(env, c, rng);
  REQUIRE(r.success);
  CHECK(r.ticks == 9);  // 4.5 units at 0.5 per tick, inside the radius after 9
  CHECK(r.time_cost == 4.5);
  CHECK(r.step_cost == 4);
  CHECK(r.step_cost <= env.step_cap);
}

TEST_CASE("trials are deterministic under a seed") {
  FieldPatternSpec spec;
  spec.kind = PatternKind::vortex;
  spec.strength = 0.4;
  spec.noise = 0.1;
  EnvSpec env;
  env.field = std::make_shared<const DisturbanceField>(generate(spec, 16, 16, 3, 20.0));
  const auto obstacles = env.obstacles();
  auto cfg = PolicyConfig::tiny();
  cfg.grid_w = cfg.grid_h = 16;
  auto w = std::make_shared<const PolicyWeights>(PolicyWeights::initialized(cfg, 3));
  for (int kind = 0; kind < 2; ++kind) {
    std::unique_ptr<Controller> a, b;
    if (kind == 0) {
      a = std::make_unique<PolicyController>(w, ActionSelection::sample);
      b = std::make_unique<PolicyController>(w, ActionSelection::sample);
    } else {
      a = std::make_unique<IlqrController>(RecedingHorizonConfig{});
      b = std::make_unique<IlqrController>(RecedingHorizonConfig{});
    }
    const auto ra = run_seeded_trial(env, obstacles, *a, 1234);
    const auto rb = run_seeded_trial(env, obstacles, *b, 1234);
    CHECK(ra.path.states == rb.path.states);
    CHECK(ra.status == rb.status);
    CHECK(ra.step_cost == rb.step_cost);
    CHECK(ra.seed == 1234);
    CHECK(ra.setup.start == rb.setup.start);
  }
  CHECK(trial_seed(1, 0) != trial_seed(1, 1));
  CHECK(trial_seed(1, 0) != trial_seed(2, 0));
  CHECK(trial_seed(7, 3) == trial_seed(7, 3));
}

TEST_CASE("batch summaries") {
  SUBCASE("one success") {
    const auto s = summarize({fake(true, 5.0, 4)}, CostAveraging::successes_only);
    CHECK(s.success_rate == 1.0);
    CHECK(s.mean_time_cost == 5.0);
    CHECK(s.std_time_cost == 0.0);
  }
  SUBCASE("48 of 50") {
    std::vector<TrialResult> rs;
    for (int i = 0; i < 50; ++i) rs.push_back(fake(i >= 2, 10.0, 8));
    const auto s = summarize(rs, CostAveraging::successes_only);
    CHECK(s.trials == 50);
    CHECK(s.successes == 48);
    CHECK(s.success_rate == 0.96);
  }
  SUBCASE("both averaging conventions") {
    const std::vector<TrialResult> rs{fake(true, 10.0, 6), fake(true, 20.0, 10), fake(false, 300.0, 40)};
    const auto only = summarize(rs, CostAveraging::successes_only);
    CHECK(only.mean_time_cost == 15.0);
    CHECK(only.std_time_cost == 5.0);  // population
    CHECK(only.mean_step_cost == 8.0);
    CHECK(only.std_step_cost == 2.0);
    const auto all = summarize(rs, CostAveraging::all_trials);
    CHECK(all.mean_time_cost == doctest::Approx(110.0));
    CHECK(all.mean_step_cost == doctest::Approx(56.0 / 3.0));
    CHECK(all.std_time_cost == doctest::Approx(std::sqrt((100.0 * 100 + 90.0 * 90 + 190.0 * 190) / 3)));
    CHECK(all.success_rate == only.success_rate);
  }
  SUBCASE("no successes") {
    const auto s = summarize({fake(false, 300.0, 20)}, CostAveraging::successes_only);
    CHECK(s.success_rate == 0.0);
    CHECK(s.mean_time_cost == 0.0);
  }
}

TEST_CASE("run_batch merges in trial order regardless of workers") {
  EnvSpec env;
  env.field = zero_field(16);
  const ControllerFactory make = [] { return std::make_unique<HeadingController>(); };
  const auto a = run_batch(env, make, 12, 99, 1);
  const auto b = run_batch(env, make, 12, 99, 3);
  REQUIRE(a.results.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(a.results[i].seed == trial_seed(99, static_cast<int>(i)));
    CHECK(a.results[i].seed == b.results[i].seed);
    CHECK(a.results[i].path.states == b.results[i].path.states);
  }
  CHECK(a.success_rate == b.success_rate);
  CHECK(a.success_rate == static_cast<double>(a.successes) / 12);
  CHECK_THROWS_AS(run_batch(env, make, 0, 1), ConfigError);
}

TEST_CASE("random placement respects separation and obstacles") {
  EnvSpec env;
  env.field = zero_field(12);
  env.min_separation = 4.0;
  env.max_separation = 7.0;
  ObstacleMap obstacles = env.obstacles();
  for (int ix = 4; ix < 7; ++ix)
    for (int iy = 3; iy < 9; ++iy) obstacles.set(ix, iy, true);
  Rng rng(5);
  std::set<std::pair<int, int>> cells;
  for (int i = 0; i < 10000; ++i) {
    const auto s = draw_setup(env, obstacles, rng);
    const double d = (s.goal - s.start).norm();
    CHECK(d >= 4.0);
    CHECK(d <= 7.0);
    for (const auto& p : {s.start, s.goal}) {
      const int ix = static_cast<int>(std::floor(p.x())), iy = static_cast<int>(std::floor(p.y()));
      CHECK_FALSE(obstacles.blocked_cell(ix, iy));
      cells.insert({ix, iy});
    }
    CHECK(s.heading == doctest::Approx(std::atan2(s.goal.y() - s.start.y(), s.goal.x() - s.start.x())));
  }
  CHECK(cells.size() > 50);  // spread over the free area
}

TEST_CASE("environment validation") {
  EnvSpec env;
  CHECK_THROWS_AS(env.validate(), ConfigError);
  env.field = zero_field(8);
  CHECK_NOTHROW(env.validate());
  env.min_separation = 0.0;
  CHECK_THROWS_AS(env.validate(), ConfigError);
  env.min_separation = 4.0;
  env.max_separation = 2.0;
  CHECK_THROWS_AS(env.validate(), ConfigError);
  env.max_separation = 0.0;
  env.start = env.goal = Eigen::Vector2d(3, 3);
  CHECK_THROWS_AS(env.validate(), ConfigError);
  CHECK(parse_method("drl") == Method::drl);
  CHECK(parse_method("iLQR") == Method::ilqr);
  CHECK_THROWS_AS(parse_method("astar"), ConfigError);
}

TEST_CASE("per-trial CSV rows") {
  std::ostringstream out;
  write_trial_csv_header(out);
  TrialResult r = fake(true, 12.5, 9);
  r.method = Method::ilqr;
  r.seed = 42;
  write_trial_csv_row(out, 3, "vortex", r);
  CHECK(out.str() == "trial,method,area,success,time_cost,step_cost,seed\n3,iLQR,vortex,1,12.5,9,42\n");
}
