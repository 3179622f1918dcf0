#pragma once

// Episode rewards, experience replay and policy-gradient updates.
//
// Episode reward:
//   r_s = 1 / sum_t pi(a_t | s_t) * |p_{t+1} - goal|
//   r_d = 1 - exp(-D_min),  D_min = min_t |p_t - goal|
//   r   = r_s                              on success
//       = -(alpha r_s + (1 - alpha) r_d)   on failure
// Each step t of a T-step episode is credited q_t = gamma^(T-1-t) * r.
// Update: w += lr * mean_i(q_i * iw_i * grad log pi(a_i | s_i)), where iw is
// the importance weight (1 except for guided samples).

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "driftplan/controllers.hpp"
#include "driftplan/episode.hpp"
#include "driftplan/policy.hpp"

namespace driftplan {

struct Experience {
  ObsKey obs;
  int action = 0;
  double reward = 0.0;  // episode reward r
  double q_hat = 0.0;  // discounted credit for this step
  double importance = 1.0;
  int step_index = 0;
  int episode_length = 0;
  std::uint64_t tag = 0;  // insertion sequence number

  double coefficient() const { return q_hat * importance; }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  // Appends in order, evicting oldest entries beyond capacity.
  void push(std::span<const Experience> experiences);

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Experience& operator[](std::size_t i) const { return items_[i]; }
  const std::deque<Experience>& items() const { return items_; }
  void clear() { items_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<Experience> items_;
};

struct Batch {
  std::vector<Experience> items;
  std::size_t from_latest = 0;
  std::size_t from_buffer = 0;
  bool small = false;  // fewer than batch_size available
};

// All of `latest` (its newest batch_size if it alone overflows), padded by a
// uniform draw without replacement from the buffer, then shuffled.
Batch make_batch(const ReplayBuffer& buffer, std::span<const Experience> latest, std::size_t batch_size, Rng& rng);

struct RewardParts {
  double r_s = 0.0;
  double r_d = 0.0;
  double r = 0.0;
};

// path has one more state than probs_taken.
RewardParts reward_parts(const Trajectory& path, std::span<const double> probs_taken, const Eigen::Vector2d& goal,
                         bool succeeded, double alpha, double r_max = 10.0);
double episode_reward(const Trajectory& path, std::span<const double> probs_taken, const Eigen::Vector2d& goal,
                      bool succeeded, double alpha, double r_max = 10.0);

struct EpisodeRecord {
  Trajectory path;
  std::vector<ObsKey> keys;
  std::vector<int> actions;
  std::vector<double> probs;  // pi(a_t | s_t) at collection time
  std::vector<double> importance;
  Eigen::Vector2d goal{0.0, 0.0};
  TrialStatus status = TrialStatus::running;
  bool guided = false;

  bool success() const { return status == TrialStatus::success; }
  int steps() const { return static_cast<int>(actions.size()); }
};

std::vector<Experience> assign_rewards(const EpisodeRecord& episode, double r, double gamma,
                                       std::uint64_t first_tag = 0);

struct GuidedSampling {
  RecedingHorizonConfig controller;
  double teacher_prob = 0.9;  // q(a|s) mass on the iLQR action
  double importance_cap = 5.0;
};

struct TrainingConfig {
  double learning_rate = 1e-6;
  int batch_size = 500;
  std::size_t capacity = 10000;
  int episode_cap = 300;
  double alpha = 0.9;
  double gamma = 0.99;
  int rounds = 0;
  double guided_fraction = 0.1;  // every round(1/beta)-th episode is guided
  double r_max = 10.0;
  std::uint64_t seed = 1;
  int workers = 1;
  GuidedSampling guide;

  void validate() const;
  bool guided_round(int round) const;
};

EpisodeRecord collect_policy_episode(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup,
                                     const PolicyWeights& w, Rng& rng);
EpisodeRecord collect_guided_episode(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup,
                                     const PolicyWeights& w, const GuidedSampling& guide, Rng& rng);

struct UpdateStats {
  double loss = 0.0;  // -mean(coeff * log pi)
  double grad_norm = 0.0;
  std::size_t batch = 0;
  bool skipped = false;
};

// grad = mean_i coeff_i * grad log pi(a_i | s_i), train-mode (dropout) forward.
// Per-experience dropout streams are seeded from rng in batch order and
// partial sums are merged in a fixed order, so the result does not depend on
// `workers`.
UpdateStats policy_gradient(const PolicyWeights& w, std::span<const Experience> batch,
                            const ObservationEncoder& encoder, Rng& rng, PolicyWeights& grad, int workers = 1);

// Gradient ascent step; non-finite gradients skip the update.
UpdateStats update(PolicyWeights& w, std::span<const Experience> batch, const ObservationEncoder& encoder,
                   double learning_rate, Rng& rng, int workers = 1);

struct CurvePoint {
  int round = 0;
  double reward = 0.0;
  bool success = false;
  double loss = 0.0;
  int steps = 0;
  bool guided = false;
};

struct TrainingState {
  PolicyWeights weights;
  ReplayBuffer buffer;
  Rng rng;
  int round = 0;
  std::uint64_t next_tag = 0;
  std::vector<CurvePoint> curve;
};

TrainingState start_training(const PolicyConfig& policy, const TrainingConfig& cfg);

// Runs `rounds` more rounds; `on_round` fires after each one.
void train(const EnvSpec& env, const TrainingConfig& cfg, TrainingState& state, int rounds,
           const std::function<void(const TrainingState&)>& on_round = {});

struct TrainingResult {
  PolicyWeights weights;
  std::vector<CurvePoint> curve;
};

TrainingResult run_training(const EnvSpec& env, const PolicyConfig& policy, const TrainingConfig& cfg);

// `round,reward,success,loss,steps`
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);

}  // namespace driftplan
