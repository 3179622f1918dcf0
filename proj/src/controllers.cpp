#include "driftplan/controllers.hpp"

#include <algorithm>
#include <cmath>

#include "driftplan/errors.hpp"

namespace driftplan {

ControlInput HeadingController::act(const Simulator& sim, Rng&) {
  const auto& s = sim.state();
  const Eigen::Vector2d d = sim.setup().goal - s.position();
  const auto& m = sim.env().motion;
  const double err = wrap_angle(std::atan2(d.y(), d.x()) - s.theta);
  return {std::clamp(gain_ * err / m.dt, -m.u_max, m.u_max)};
}

void IlqrController::reset(const Simulator&, Rng&) {
  plan_.reset();
  index_ = 0;
}

ControlInput IlqrController::act(const Simulator& sim, Rng&) {
  const auto& m = sim.env().motion;
  if (!plan_ || index_ >= cfg_.replan_every || index_ >= static_cast<int>(plan_->controls.size())) {
    plan_ = solve(sim.state(), sim.setup().goal, *sim.env().field, sim.time(), m, cfg_.cost, cfg_.solver);
    index_ = 0;
  }
  const auto i = static_cast<std::size_t>(index_++);
  Eigen::Vector3d ds = sim.state().vec() - plan_->states[i];
  ds.z() = wrap_angle(ds.z());
  const double u = plan_->controls[i] + plan_->gains[i].K.dot(ds);
  return {std::clamp(u, -m.u_max, m.u_max)};
}

void PolicyController::reset(const Simulator& sim, Rng&) {
  const auto& cfg = weights_->config();
  if (cfg.grid_w != sim.env().field->grid_w() || cfg.grid_h != sim.env().field->grid_h())
    throw ConfigError("policy grid " + std::to_string(cfg.grid_w) + "x" + std::to_string(cfg.grid_h) +
                      " does not match field grid " + std::to_string(sim.env().field->grid_w()) + "x" +
                      std::to_string(sim.env().field->grid_h()));
  encoder_.emplace(*sim.env().field, sim.obstacles(), sim.env().motion.v);
}

ControlInput PolicyController::act(const Simulator& sim, Rng& rng) {
  if (!encoder_) throw ConfigError("policy controller used before reset");
  encoder_->encode_into(sim.obs_key(), obs_);
  const auto& dist = forward(*weights_, obs_, cache_);
  const int a = selection_ == ActionSelection::greedy ? dist.argmax() : sample_action(dist, rng);
  return action_to_control(a, weights_->config().actions, sim.env().motion.u_max);
}

}  // namespace driftplan
