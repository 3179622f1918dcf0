#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "driftplan/errors.hpp"
#include "driftplan/field.hpp"
#include "driftplan/policy.hpp"

using namespace driftplan;

namespace {

Observation random_observation(const PolicyConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Observation obs;
  obs.grid_w = cfg.grid_w;
  obs.grid_h = cfg.grid_h;
  obs.env.resize(obs.slice_size() * kTimeSteps);
  for (auto& x : obs.env) x = U(rng);
  for (auto& x : obs.vehicle) x = U(rng);
  return obs;
}

// Weights scaled up from the default init so that every layer carries a
// gradient well above round-off.
PolicyWeights check_weights(const PolicyConfig& cfg, std::uint64_t seed) {
  auto w = PolicyWeights::initialized(cfg, seed);
  for (auto& v : w.values()) v *= 1.5;
  return w;
}

double log_prob(const PolicyWeights& w, const Observation& obs, int action, NetMode mode, std::uint64_t mask_seed) {
  PolicyCache cache;
  Rng rng(mask_seed);
  const auto& d = forward(w, obs, cache, mode, &rng);
  return std::log(d.probs[static_cast<std::size_t>(action)]);
}

}  // namespace

TEST_CASE("config validation") {
  PolicyConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK_NOTHROW(PolicyConfig::tiny().validate());
  c.grid_w = 12;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.channels[1] = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.actions = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(PolicyConfig{}.env_features() == 16 * 6 * 6);
}

TEST_CASE("weights layout and initialization") {
  const auto cfg = PolicyConfig::tiny();
  const auto w = PolicyWeights::initialized(cfg, 3);
  REQUIRE(w.tensors().size() == PolicyWeights::tensor_count);
  CHECK(w.find("rec0.wd") == PolicyWeights::rec0_wd);
  CHECK(w.find("veh1.w") == PolicyWeights::veh1_w);
  CHECK(w.find("fc1.w") == PolicyWeights::fc1_w);
  CHECK(w.find("out.b") == PolicyWeights::out_b);
  CHECK(w.tensor(PolicyWeights::rec0_wd).size() == 2u * kInputChannels * 9);
  CHECK(w.tensor(PolicyWeights::fc1_w).size() == 8u * (cfg.env_features() + 4));
  std::size_t total = 0;
  for (const auto& t : w.tensors()) {
    CHECK(t.offset == total);
    total += t.size;
  }
  CHECK(total == w.values().size());
  CHECK(w == PolicyWeights::initialized(cfg, 3));
  CHECK_FALSE(w == PolicyWeights::initialized(cfg, 4));
  CHECK(w.all_finite());
}

TEST_CASE("softmax is normalized and shift invariant") {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{1001.0, 1002.0, 1003.0};
  const auto pa = softmax(a), pb = softmax(b);
  CHECK(pa[0] + pa[1] + pa[2] == doctest::Approx(1.0));
  for (int i = 0; i < 3; ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
  CHECK(pa[2] / pa[1] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("gradient matches central differences on every tensor") {
  const auto cfg = PolicyConfig::tiny();
  const auto w0 = check_weights(cfg, 17);
  const auto obs = random_observation(cfg, 23);
  const double eps = 1e-5;
  for (NetMode mode : {NetMode::eval, NetMode::train}) {
    const int action = mode == NetMode::eval ? 2 : 6;
    const std::uint64_t mask_seed = 99;
    PolicyCache cache;
    Rng rng(mask_seed);
    forward(w0, obs, cache, mode, &rng);
    PolicyWeights grad(cfg);
    backward(w0, obs, cache, action, 1.0, grad);

    auto w = w0;
    for (std::size_t id = 0; id < PolicyWeights::tensor_count; ++id) {
      const auto& info = w.tensors()[id];
      CAPTURE(info.name);
      CAPTURE(static_cast<int>(mode));
      auto values = w.tensor(id);
      const auto analytic = grad.tensor(id);
      double diff2 = 0.0, norm2 = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double up = log_prob(w, obs, action, mode, mask_seed);
        values[i] = saved - eps;
        const double down = log_prob(w, obs, action, mode, mask_seed);
        values[i] = saved;
        const double fd = (up - down) / (2 * eps);
        diff2 += (fd - analytic[i]) * (fd - analytic[i]);
        norm2 += std::max(fd * fd, analytic[i] * analytic[i]);
      }
      REQUIRE(norm2 > 0.0);
      const double rel = std::sqrt(diff2 / norm2);
      CAPTURE(rel);
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("backward scales linearly with the coefficient and accumulates") {
  const auto cfg = PolicyConfig::tiny();
  const auto w = check_weights(cfg, 5);
  const auto obs = random_observation(cfg, 6);
  PolicyCache cache;
  forward(w, obs, cache);
  PolicyWeights g1(cfg), g2(cfg);
  backward(w, obs, cache, 4, 1.0, g1);
  backward(w, obs, cache, 4, 0.5, g2);
  backward(w, obs, cache, 4, 1.5, g2);
  for (std::size_t i = 0; i < g1.values().size(); ++i)
    CHECK(g2.values()[i] == doctest::Approx(2.0 * g1.values()[i]).epsilon(1e-12).scale(1e-15));
}

TEST_CASE("score function identity") {
  // sum_a pi(a) grad log pi(a) = grad sum_a pi(a) = 0
  const auto cfg = PolicyConfig::tiny();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto w = check_weights(cfg, seed);
    const auto obs = random_observation(cfg, seed + 10);
    PolicyCache cache;
    const auto dist = forward(w, obs, cache);
    PolicyWeights sum(cfg);
    for (int a = 0; a < cfg.actions; ++a) backward(w, obs, cache, a, dist.probs[static_cast<std::size_t>(a)], sum);
    double worst = 0.0;
    for (double v : sum.values()) worst = std::max(worst, std::abs(v));
    CAPTURE(worst);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("dropout is only active in train mode and replays from the seed") {
  const auto cfg = PolicyConfig::tiny();
  const auto w = check_weights(cfg, 8);
  const auto obs = random_observation(cfg, 9);
  const auto e1 = forward(w, obs);
  const auto e2 = forward(w, obs);
  CHECK(e1.probs == e2.probs);
  PolicyCache c1, c2;
  Rng r1(3), r2(3);
  const auto t1 = forward(w, obs, c1, NetMode::train, &r1);
  const auto t2 = forward(w, obs, c2, NetMode::train, &r2);
  CHECK(t1.probs == t2.probs);
  // fc1 has only 8 units here, so single seeds can collide on a mask
  int differing = 0;
  for (std::uint64_t seed = 4; seed < 12; ++seed) {
    PolicyCache c3;
    Rng r3(seed);
    differing += forward(w, obs, c3, NetMode::train, &r3).probs != t1.probs;
  }
  CHECK(differing >= 6);
  CHECK(t1.probs != e1.probs);
  PolicyCache c4;
  CHECK_THROWS_AS(forward(w, obs, c4, NetMode::train, nullptr), ConfigError);
}

TEST_CASE("sampling frequencies follow the distribution") {
  const std::vector<double> probs{0.05, 0.1, 0.2, 0.3, 0.15, 0.1, 0.05, 0.04, 0.01};
  Rng rng(2024);
  const int n = 100000;
  std::vector<int> counts(probs.size(), 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_action(probs, rng))];
  for (std::size_t a = 0; a < probs.size(); ++a) {
    const double sigma = std::sqrt(n * probs[a] * (1 - probs[a]));
    CAPTURE(a);
    CHECK(std::abs(counts[a] - n * probs[a]) < 3 * sigma);
  }
  SUBCASE("zero-probability actions are never drawn") {
    const std::vector<double> p{0.0, 1.0, 0.0};
    for (int i = 0; i < 1000; ++i) CHECK(sample_action(p, rng) == 1);
  }
}

TEST_CASE("action mapping") {
  using std::numbers::pi;
  const double um = pi / 4;
  CHECK(action_to_control(0, 9, um).u == doctest::Approx(-um));
  CHECK(action_to_control(4, 9, um).u == doctest::Approx(0.0));
  CHECK(action_to_control(8, 9, um).u == doctest::Approx(um));
  CHECK(action_to_control(6, 9, um).u == doctest::Approx(um / 2));
  for (int a = 0; a < 9; ++a) CHECK(nearest_action(action_to_control(a, 9, um).u, 9, um) == a);
  CHECK(nearest_action(10.0, 9, um) == 8);
  CHECK(nearest_action(-10.0, 9, um) == 0);
  CHECK(nearest_action(0.06, 9, um) == 4);
  CHECK_THROWS_AS(action_to_control(9, 9, um), ConfigError);
  CHECK_THROWS_AS(action_to_control(0, 1, um), ConfigError);
}

TEST_CASE("observation history pads with the oldest sample") {
  ObsHistory h;
  CHECK_THROWS_AS(h.key({0, 0}), ConfigError);
  h.reset(0.0, {1, 1, 0});
  auto k = h.key({5, 5});
  CHECK(k.states[0] == VehicleState{1, 1, 0});
  CHECK(k.states[2] == VehicleState{1, 1, 0});
  h.push(1.0, {2, 1, 0});
  h.push(2.0, {3, 1, 0});
  h.push(3.0, {4, 1, 0});
  k = h.key({5, 5});
  CHECK(k.times == std::array<double, 3>{1.0, 2.0, 3.0});
  CHECK(k.states[2].x == 4.0);
}

TEST_CASE("encoder writes field channels, markers and vehicle features") {
  FieldPatternSpec spec;
  spec.kind = PatternKind::uniform;
  spec.strength = 0.5;
  const auto f = generate(spec, 8, 8, 1, 1.0);
  const ObstacleMap obstacles(8, 8, 1.0, true);
  const ObservationEncoder enc(f, obstacles, 1.0);
  ObsKey key;
  for (int i = 0; i < kTimeSteps; ++i) {
    key.times[i] = i;
    key.states[i] = {2.5 + i, 3.5, 0.0};
  }
  key.goal = {6.2, 3.9};
  const auto obs = enc.encode(key);
  const std::size_t plane = 64;
  REQUIRE(obs.env.size() == kTimeSteps * kInputChannels * plane);
  for (int step = 0; step < kTimeSteps; ++step) {
    const auto s = obs.slice(step);
    CHECK(s[0 * plane + 3 * 8 + 4] == doctest::Approx(0.5));  // x component
    CHECK(s[1 * plane + 3 * 8 + 4] == doctest::Approx(0.0));
    const double* occ = s.data() + 2 * plane;
    CHECK(occ[0] == kObstacleMarker);
    CHECK(occ[3 * 8 + 6] == kGoalMarker);
    CHECK(occ[3 * 8 + 2 + step] == kRobotMarker);
    CHECK(occ[4 * 8 + 4] == 0.0);
  }
  CHECK(obs.vehicle[0] == doctest::Approx(1.0));
  CHECK(obs.vehicle[1] == doctest::Approx(0.0));
  const Eigen::Vector2d d = key.goal - Eigen::Vector2d(4.5, 3.5);
  CHECK(obs.vehicle[2] == doctest::Approx(d.x() / d.norm()));
  CHECK(obs.vehicle[3] == doctest::Approx(d.y() / d.norm()));
  CHECK(obs.vehicle[4] == doctest::Approx(d.norm() / std::hypot(8.0, 8.0)));
  CHECK_THROWS_AS(ObservationEncoder(f, ObstacleMap(4, 4, 1.0, true), 1.0), ConfigError);
}
