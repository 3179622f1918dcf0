#include "driftplan/episode.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>

#include "driftplan/csv.hpp"
#include "driftplan/errors.hpp"

namespace driftplan {

std::string to_string(Method m) {
  switch (m) {
    case Method::drl: return "DRL";
    case Method::ilqr: return "iLQR";
    case Method::other: return "other";
  }
  return "other";
}

Method parse_method(const std::string& name) {
  if (name == "drl" || name == "DRL") return Method::drl;
  if (name == "ilqr" || name == "iLQR") return Method::ilqr;
  throw ConfigError("unknown method '" + name + "' (expected drl or ilqr)");
}

void EnvSpec::validate() const {
  if (!field) throw ConfigError("environment has no field");
  motion.validate();
  if (!(min_separation > 0.0)) throw ConfigError("min_separation must be > 0");
  if (max_separation != 0.0 && max_separation < min_separation)
    throw ConfigError("max_separation must be >= min_separation");
  if (step_cap < 1) throw ConfigError("step_cap must be >= 1");
  if (!(success_radius > 0.0)) throw ConfigError("success_radius must be > 0");
  if (start && goal && (*start - *goal).norm() == 0.0) throw ConfigError("start and goal coincide");
}

ObstacleMap EnvSpec::obstacles() const {
  return ObstacleMap(field->grid_w(), field->grid_h(), field->cell_size(), border_obstacles);
}

namespace {

bool clear_spawn(const ObstacleMap& obstacles, const Eigen::Vector2d& p, double margin) {
  return !obstacles.blocked(p.x() - margin, p.y() - margin) && !obstacles.blocked(p.x() + margin, p.y() - margin) &&
         !obstacles.blocked(p.x() - margin, p.y() + margin) && !obstacles.blocked(p.x() + margin, p.y() + margin);
}

}  // namespace

TrialSetup draw_setup(const EnvSpec& env, const ObstacleMap& obstacles, Rng& rng) {
  const double cs = env.field->cell_size();
  const double W = env.field->grid_w() * cs, H = env.field->grid_h() * cs;
  const double margin = 0.5 * cs;
  auto draw_point = [&]() -> Eigen::Vector2d {
    for (int attempt = 0; attempt < 100000; ++attempt) {
      Eigen::Vector2d p(uniform01(rng) * W, uniform01(rng) * H);
      if (clear_spawn(obstacles, p, margin)) return p;
    }
    throw ConfigError("no free spawn area in environment");
  };
  TrialSetup s;
  s.t0 = env.t0;
  for (int attempt = 0; attempt < 100000; ++attempt) {
    s.start = env.start ? *env.start : draw_point();
    s.goal = env.goal ? *env.goal : draw_point();
    const double d = (s.goal - s.start).norm();
    const bool fixed = env.start && env.goal;
    if (fixed || (d >= env.min_separation && (env.max_separation == 0.0 || d <= env.max_separation))) {
      const Eigen::Vector2d to_goal = s.goal - s.start;
      s.heading = env.start_heading ? wrap_angle(*env.start_heading) : std::atan2(to_goal.y(), to_goal.x());
      return s;
    }
  }
  throw ConfigError("cannot place start/goal with the requested separation");
}

// ---------------------------------------------------------------------------

Simulator::Simulator(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup)
    : env_(env), obstacles_(obstacles), setup_(setup) {
  state_ = {setup.start.x(), setup.start.y(), wrap_angle(setup.heading)};
  time_ = setup.t0;
  path_.states.push_back(state_);
  path_.times.push_back(time_);
  history_.reset(time_, state_);
  update_status();
}

void Simulator::apply(ControlInput u) {
  if (done()) throw ConfigError("trial already finished");
  const double cs = env_.field->cell_size();
  const long ix0 = std::lround(std::floor(state_.x / cs)), iy0 = std::lround(std::floor(state_.y / cs));
  state_ = step(state_, u, *env_.field, time_, env_.motion);
  time_ = setup_.t0 + (ticks_ + 1) * env_.motion.dt;
  ++ticks_;
  if (std::isfinite(state_.x) && std::isfinite(state_.y)) {
    const long ix1 = std::lround(std::floor(state_.x / cs)), iy1 = std::lround(std::floor(state_.y / cs));
    step_cost_ += static_cast<int>(std::labs(ix1 - ix0) + std::labs(iy1 - iy0));
  }
  path_.controls.push_back(u);
  path_.states.push_back(state_);
  path_.times.push_back(time_);
  history_.push(time_, state_);
  update_status();
}

void Simulator::update_status() {
  if (obstacles_.blocked(state_.x, state_.y))
    status_ = TrialStatus::collision;
  else if (distance_to_goal() < env_.success_radius)
    status_ = TrialStatus::success;
  else if (ticks_ >= env_.step_cap)
    status_ = TrialStatus::timeout;
}

// ---------------------------------------------------------------------------

TrialResult run_trial(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup,
                      Controller& controller, Rng& rng) {
  Simulator sim(env, obstacles, setup);
  controller.reset(sim, rng);
  while (!sim.done()) sim.apply(controller.act(sim, rng));
  TrialResult r;
  r.status = sim.status();
  r.success = sim.status() == TrialStatus::success;
  r.ticks = sim.ticks();
  r.time_cost = sim.ticks() * env.motion.dt;
  r.step_cost = sim.step_cost();
  r.path = sim.path();
  r.method = controller.method();
  r.setup = setup;
  return r;
}

TrialResult run_trial(const EnvSpec& env, Controller& controller, Rng& rng) {
  env.validate();
  const ObstacleMap obstacles = env.obstacles();
  const TrialSetup setup = draw_setup(env, obstacles, rng);
  return run_trial(env, obstacles, setup, controller, rng);
}

std::uint64_t trial_seed(std::uint64_t base_seed, int trial) {
  // splitmix64 finalizer
  std::uint64_t z = base_seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(trial) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

TrialResult run_seeded_trial(const EnvSpec& env, const ObstacleMap& obstacles, Controller& controller,
                             std::uint64_t seed) {
  Rng setup_rng(seed);
  const TrialSetup setup = draw_setup(env, obstacles, setup_rng);
  Rng ctrl_rng(seed ^ kControllerStream);
  TrialResult r = run_trial(env, obstacles, setup, controller, ctrl_rng);
  r.seed = seed;
  return r;
}

BatchSummary summarize(std::vector<TrialResult> results, CostAveraging averaging) {
  BatchSummary s;
  s.trials = static_cast<int>(results.size());
  double st = 0, st2 = 0, ss = 0, ss2 = 0;
  int n = 0;
  for (const auto& r : results) {
    if (r.success) ++s.successes;
    if (averaging == CostAveraging::all_trials || r.success) {
      ++n;
      st += r.time_cost;
      ss += r.step_cost;
    }
  }
  s.success_rate = s.trials > 0 ? static_cast<double>(s.successes) / s.trials : 0.0;
  if (n > 0) {
    s.mean_time_cost = st / n;
    s.mean_step_cost = ss / n;
    for (const auto& r : results) {
      if (averaging == CostAveraging::all_trials || r.success) {
        st2 += (r.time_cost - s.mean_time_cost) * (r.time_cost - s.mean_time_cost);
        ss2 += (r.step_cost - s.mean_step_cost) * (r.step_cost - s.mean_step_cost);
      }
    }
    s.std_time_cost = std::sqrt(st2 / n);
    s.std_step_cost = std::sqrt(ss2 / n);
  }
  s.results = std::move(results);
  return s;
}

BatchSummary run_batch(const EnvSpec& env, const ControllerFactory& make_controller, int n_trials,
                       std::uint64_t base_seed, int workers, CostAveraging averaging) {
  if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
  env.validate();
  const ObstacleMap obstacles = env.obstacles();
  std::vector<TrialResult> results(static_cast<std::size_t>(n_trials));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  workers = std::max(1, workers);

#pragma omp parallel num_threads(workers) if (workers > 1)
  {
    std::unique_ptr<Controller> controller;
    try {
      controller = make_controller();
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
#pragma omp for schedule(dynamic)
    for (int i = 0; i < n_trials; ++i) {
      if (!controller) continue;
      try {
        results[static_cast<std::size_t>(i)] =
            run_seeded_trial(env, obstacles, *controller, trial_seed(base_seed, i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  return summarize(std::move(results), averaging);
}

void write_trial_csv_header(std::ostream& out) { out << "trial,method,area,success,time_cost,step_cost,seed\n"; }

void write_trial_csv_row(std::ostream& out, int trial, const std::string& area, const TrialResult& r) {
  out << trial << ',' << to_string(r.method) << ',' << area << ',' << (r.success ? 1 : 0) << ','
      << csv::format_number(r.time_cost) << ',' << r.step_cost << ',' << r.seed << '\n';
}

}  // namespace driftplan
