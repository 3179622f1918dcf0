#pragma once

// Trial harness: start/goal placement, border obstacles, termination and the
// per-trial metrics (success, simulated time, grid-transition count).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "driftplan/dynamics.hpp"
#include "driftplan/field.hpp"
#include "driftplan/policy.hpp"

namespace driftplan {

enum class Method { drl, ilqr, other };
std::string to_string(Method m);
Method parse_method(const std::string& name);

struct EnvSpec {
  std::shared_ptr<const DisturbanceField> field;
  bool border_obstacles = true;
  std::optional<Eigen::Vector2d> start;  // nullopt: random
  std::optional<Eigen::Vector2d> goal;
  std::optional<double> start_heading;  // nullopt: face the goal
  double min_separation = 4.0;
  double max_separation = 0.0;  // 0: unbounded
  MotionParams motion;
  int step_cap = 300;
  double success_radius = 1.0;
  double t0 = 0.0;

  void validate() const;
  ObstacleMap obstacles() const;
};

struct TrialSetup {
  Eigen::Vector2d start{0.0, 0.0};
  Eigen::Vector2d goal{0.0, 0.0};
  double heading = 0.0;
  double t0 = 0.0;
};

// Draws (or copies) start/goal: uniform over free cells' interiors, never on
// an obstacle cell, with separation in [min_separation, max_separation].
TrialSetup draw_setup(const EnvSpec& env, const ObstacleMap& obstacles, Rng& rng);

enum class TrialStatus { running, success, collision, timeout };

// Steps the vehicle and tracks termination and metrics for one trial.
class Simulator {
 public:
  Simulator(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup);

  void apply(ControlInput u);

  const EnvSpec& env() const { return env_; }
  const ObstacleMap& obstacles() const { return obstacles_; }
  const TrialSetup& setup() const { return setup_; }
  const VehicleState& state() const { return state_; }
  double time() const { return time_; }
  int ticks() const { return ticks_; }
  int step_cost() const { return step_cost_; }
  TrialStatus status() const { return status_; }
  bool done() const { return status_ != TrialStatus::running; }
  double distance_to_goal() const { return (state_.position() - setup_.goal).norm(); }
  const Trajectory& path() const { return path_; }
  const ObsHistory& history() const { return history_; }
  ObsKey obs_key() const { return history_.key(setup_.goal); }

 private:
  void update_status();

  const EnvSpec& env_;
  const ObstacleMap& obstacles_;
  TrialSetup setup_;
  VehicleState state_;
  double time_ = 0.0;
  int ticks_ = 0;
  int step_cost_ = 0;
  TrialStatus status_ = TrialStatus::running;
  Trajectory path_;
  ObsHistory history_;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual Method method() const = 0;
  virtual void reset(const Simulator& sim, Rng& rng) { (void)sim; (void)rng; }
  virtual ControlInput act(const Simulator& sim, Rng& rng) = 0;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

struct TrialResult {
  bool success = false;
  TrialStatus status = TrialStatus::running;
  int ticks = 0;
  double time_cost = 0.0;
  int step_cost = 0;
  Trajectory path;
  Method method = Method::other;
  TrialSetup setup;
  std::uint64_t seed = 0;
};

TrialResult run_trial(const EnvSpec& env, Controller& controller, Rng& rng);
TrialResult run_trial(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup,
                      Controller& controller, Rng& rng);

// Per-trial seed derived from the batch seed; start/goal and controller
// randomness for trial i depend only on this value.
std::uint64_t trial_seed(std::uint64_t base_seed, int trial);

// Trial i uses setup drawn from Rng(trial_seed) and controller stream
// Rng(trial_seed ^ kControllerStream).
inline constexpr std::uint64_t kControllerStream = 0x9e3779b97f4a7c15ull;
TrialResult run_seeded_trial(const EnvSpec& env, const ObstacleMap& obstacles, Controller& controller,
                             std::uint64_t seed);

enum class CostAveraging { successes_only, all_trials };

struct BatchSummary {
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_time_cost = 0.0;
  double std_time_cost = 0.0;  // population
  double mean_step_cost = 0.0;
  double std_step_cost = 0.0;
  std::vector<TrialResult> results;  // trial-index order
};

BatchSummary summarize(std::vector<TrialResult> results, CostAveraging averaging);

// Trials fan out over `workers` threads; results merge in trial order.
BatchSummary run_batch(const EnvSpec& env, const ControllerFactory& make_controller, int n_trials,
                       std::uint64_t base_seed, int workers = 1,
                       CostAveraging averaging = CostAveraging::successes_only);

// `trial,method,area,success,time_cost,step_cost,seed`
void write_trial_csv_header(std::ostream& out);
void write_trial_csv_row(std::ostream& out, int trial, const std::string& area, const TrialResult& r);

}  // namespace driftplan
