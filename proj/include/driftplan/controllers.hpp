#pragma once

#include <memory>
#include <optional>

#include "driftplan/episode.hpp"
#include "driftplan/ilqr.hpp"
#include "driftplan/policy.hpp"

namespace driftplan {

class ConstantController final : public Controller {
 public:
  explicit ConstantController(double u) : u_(u) {}
  Method method() const override { return Method::other; }
  ControlInput act(const Simulator&, Rng&) override { return {u_}; }

 private:
  double u_;
};

// Turn toward the goal at rate gain * heading_error / dt, clamped to u_max.
class HeadingController final : public Controller {
 public:
  explicit HeadingController(double gain = 1.0) : gain_(gain) {}
  Method method() const override { return Method::other; }
  ControlInput act(const Simulator& sim, Rng&) override;

 private:
  double gain_;
};

struct RecedingHorizonConfig {
  ILQRConfig solver;
  QuadraticCost cost;
  int replan_every = 5;
};

// Re-solves from the current state every `replan_every` ticks and tracks the
// plan with its feedback gains in between.
class IlqrController final : public Controller {
 public:
  explicit IlqrController(RecedingHorizonConfig cfg) : cfg_(std::move(cfg)) {}
  Method method() const override { return Method::ilqr; }
  void reset(const Simulator& sim, Rng& rng) override;
  ControlInput act(const Simulator& sim, Rng& rng) override;
  const std::optional<ILQRSolution>& plan() const { return plan_; }

 private:
  RecedingHorizonConfig cfg_;
  std::optional<ILQRSolution> plan_;
  int index_ = 0;
};

enum class ActionSelection { greedy, sample };

class PolicyController final : public Controller {
 public:
  PolicyController(std::shared_ptr<const PolicyWeights> weights, ActionSelection selection)
      : weights_(std::move(weights)), selection_(selection) {}
  Method method() const override { return Method::drl; }
  void reset(const Simulator& sim, Rng& rng) override;
  ControlInput act(const Simulator& sim, Rng& rng) override;

 private:
  std::shared_ptr<const PolicyWeights> weights_;
  ActionSelection selection_;
  std::optional<ObservationEncoder> encoder_;
  Observation obs_;
  PolicyCache cache_;
};

}  // namespace driftplan
