#include "driftplan/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>

#include "driftplan/csv.hpp"
#include "driftplan/errors.hpp"

namespace driftplan {

namespace {

std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return std::min(i, n - 1);
}

template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay capacity must be >= 1");
}

void ReplayBuffer::push(std::span<const Experience> experiences) {
  if (experiences.size() >= capacity_) {
    items_.assign(experiences.end() - static_cast<std::ptrdiff_t>(capacity_), experiences.end());
    return;
  }
  for (const auto& e : experiences) items_.push_back(e);
  while (items_.size() > capacity_) items_.pop_front();
}

Batch make_batch(const ReplayBuffer& buffer, std::span<const Experience> latest, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  Batch b;
  if (latest.size() >= batch_size) {
    b.items.assign(latest.end() - static_cast<std::ptrdiff_t>(batch_size), latest.end());
    b.from_latest = batch_size;
  } else {
    b.items.assign(latest.begin(), latest.end());
    b.from_latest = latest.size();
    const std::size_t want = std::min(batch_size - latest.size(), buffer.size());
    // Partial Fisher-Yates: first `want` slots become a uniform sample.
    std::vector<std::size_t> idx(buffer.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
      b.items.push_back(buffer[idx[i]]);
    }
    b.from_buffer = want;
  }
  b.small = b.items.size() < batch_size;
  shuffle_in_place(b.items, rng);
  return b;
}

// ---------------------------------------------------------------------------

RewardParts reward_parts(const Trajectory& path, std::span<const double> probs_taken, const Eigen::Vector2d& goal,
                         bool succeeded, double alpha, double r_max) {
  if (path.states.empty()) throw ConfigError("episode path is empty");
  if (path.states.size() != probs_taken.size() + 1)
    throw ConfigError("reward: path must have one more state than action probabilities");
  RewardParts out;
  double denom = 0.0;
  for (std::size_t t = 0; t < probs_taken.size(); ++t)
    denom += probs_taken[t] * (path.states[t + 1].position() - goal).norm();
  out.r_s = denom > 1.0 / r_max ? 1.0 / denom : r_max;
  double d_min = std::numeric_limits<double>::infinity();
  for (const auto& s : path.states) d_min = std::min(d_min, (s.position() - goal).norm());
  out.r_d = 1.0 - std::exp(-d_min);
  out.r = succeeded ? out.r_s : -(alpha * out.r_s + (1.0 - alpha) * out.r_d);
  return out;
}

double episode_reward(const Trajectory& path, std::span<const double> probs_taken, const Eigen::Vector2d& goal,
                      bool succeeded, double alpha, double r_max) {
  return reward_parts(path, probs_taken, goal, succeeded, alpha, r_max).r;
}

std::vector<Experience> assign_rewards(const EpisodeRecord& episode, double r, double gamma, std::uint64_t first_tag) {
  const int T = episode.steps();
  std::vector<Experience> out(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto& e = out[static_cast<std::size_t>(t)];
    e.obs = episode.keys[t];
    e.action = episode.actions[t];
    e.reward = r;
    e.q_hat = std::pow(gamma, T - 1 - t) * r;
    e.importance = episode.importance.empty() ? 1.0 : episode.importance[t];
    e.step_index = t;
    e.episode_length = T;
    e.tag = first_tag + static_cast<std::uint64_t>(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (capacity < 1) throw ConfigError("capacity must be >= 1");
  if (episode_cap < 1) throw ConfigError("episode_cap must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (rounds < 0) throw ConfigError("rounds must be >= 0");
  if (!(guided_fraction >= 0.0 && guided_fraction <= 1.0)) throw ConfigError("guided_fraction must be in [0, 1]");
  if (!(r_max > 0.0)) throw ConfigError("r_max must be > 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

bool TrainingConfig::guided_round(int round) const {
  if (!(guided_fraction > 0.0)) return false;
  const long interval = std::max(1L, std::lround(1.0 / guided_fraction));
  return (round + 1) % interval == 0;
}

EpisodeRecord collect_policy_episode(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup,
                                     const PolicyWeights& w, Rng& rng) {
  Simulator sim(env, obstacles, setup);
  const ObservationEncoder encoder(*env.field, obstacles, env.motion.v);
  Observation obs;
  PolicyCache cache;
  EpisodeRecord ep;
  ep.goal = setup.goal;
  const int K = w.config().actions;
  while (!sim.done()) {
    const ObsKey key = sim.obs_key();
    encoder.encode_into(key, obs);
    const auto& dist = forward(w, obs, cache);
    const int a = sample_action(dist, rng);
    ep.keys.push_back(key);
    ep.actions.push_back(a);
    ep.probs.push_back(dist.probs[static_cast<std::size_t>(a)]);
    sim.apply(action_to_control(a, K, env.motion.u_max));
  }
  ep.path = sim.path();
  ep.status = sim.status();
  return ep;
}

EpisodeRecord collect_guided_episode(const EnvSpec& env, const ObstacleMap& obstacles, const TrialSetup& setup,
                                     const PolicyWeights& w, const GuidedSampling& guide, Rng& rng) {
  Simulator sim(env, obstacles, setup);
  const ObservationEncoder encoder(*env.field, obstacles, env.motion.v);
  IlqrController teacher(guide.controller);
  teacher.reset(sim, rng);
  Observation obs;
  PolicyCache cache;
  EpisodeRecord ep;
  ep.goal = setup.goal;
  ep.guided = true;
  const int K = w.config().actions;
  while (!sim.done()) {
    const ObsKey key = sim.obs_key();
    encoder.encode_into(key, obs);
    const auto& dist = forward(w, obs, cache);
    const int a = nearest_action(teacher.act(sim, rng).u, K, env.motion.u_max);
    const double p = dist.probs[static_cast<std::size_t>(a)];
    ep.keys.push_back(key);
    ep.actions.push_back(a);
    ep.probs.push_back(p);
    ep.importance.push_back(std::min(p / guide.teacher_prob, guide.importance_cap));
    sim.apply(action_to_control(a, K, env.motion.u_max));
  }
  ep.path = sim.path();
  ep.status = sim.status();
  return ep;
}

// ---------------------------------------------------------------------------

UpdateStats policy_gradient(const PolicyWeights& w, std::span<const Experience> batch,
                            const ObservationEncoder& encoder, Rng& rng, PolicyWeights& grad, int workers) {
  constexpr std::size_t kChunk = 32;
  UpdateStats stats;
  stats.batch = batch.size();
  grad = PolicyWeights(w.config());
  if (batch.empty()) {
    stats.skipped = true;
    return stats;
  }
  std::vector<std::uint64_t> seeds(batch.size());
  for (auto& s : seeds) s = rng();

  const std::size_t n_chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<PolicyWeights> partial(n_chunks, PolicyWeights(w.config()));
  std::vector<double> partial_loss(n_chunks, 0.0);
  std::exception_ptr failure;

#pragma omp parallel num_threads(std::max(1, workers)) if (workers > 1)
  {
    Observation obs;
    PolicyCache cache;
#pragma omp for schedule(dynamic)
    for (std::size_t c = 0; c < n_chunks; ++c) {
      try {
        const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
          const Experience& e = batch[i];
          encoder.encode_into(e.obs, obs);
          Rng dropout_rng(seeds[i]);
          const auto& dist = forward(w, obs, cache, NetMode::train, &dropout_rng);
          const double coeff = e.coefficient();
          partial_loss[c] -= coeff * std::log(std::max(dist.probs[static_cast<std::size_t>(e.action)], 1e-300));
          backward(w, obs, cache, e.action, coeff, partial[c]);
        }
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    grad.axpy(1.0, partial[c]);
    loss += partial_loss[c];
  }
  for (double& g : grad.values()) g *= inv_n;
  stats.loss = loss * inv_n;
  double sq = 0.0;
  for (double g : grad.values()) sq += g * g;
  stats.grad_norm = std::sqrt(sq);
  return stats;
}

UpdateStats update(PolicyWeights& w, std::span<const Experience> batch, const ObservationEncoder& encoder,
                   double learning_rate, Rng& rng, int workers) {
  PolicyWeights grad;
  UpdateStats stats = policy_gradient(w, batch, encoder, rng, grad, workers);
  if (stats.skipped) return stats;
  if (!grad.all_finite() || !std::isfinite(stats.loss)) {
    stats.skipped = true;
    return stats;
  }
  w.axpy(learning_rate, grad);
  return stats;
}

// ---------------------------------------------------------------------------

TrainingState start_training(const PolicyConfig& policy, const TrainingConfig& cfg) {
  cfg.validate();
  TrainingState st{PolicyWeights::initialized(policy, cfg.seed), ReplayBuffer(cfg.capacity),
                   Rng(cfg.seed ^ 0xd1b54a32d192ed03ull), 0, 0, {}};
  return st;
}

void train(const EnvSpec& env_in, const TrainingConfig& cfg, TrainingState& st, int rounds,
           const std::function<void(const TrainingState&)>& on_round) {
  cfg.validate();
  EnvSpec env = env_in;
  env.step_cap = cfg.episode_cap;
  env.validate();
  const auto& pc = st.weights.config();
  if (pc.grid_w != env.field->grid_w() || pc.grid_h != env.field->grid_h())
    throw ConfigError("policy grid does not match training field");
  const ObstacleMap obstacles = env.obstacles();
  const ObservationEncoder encoder(*env.field, obstacles, env.motion.v);

  for (int i = 0; i < rounds; ++i) {
    const bool guided = cfg.guided_round(st.round);
    const TrialSetup setup = draw_setup(env, obstacles, st.rng);
    const EpisodeRecord ep = guided ? collect_guided_episode(env, obstacles, setup, st.weights, cfg.guide, st.rng)
                                    : collect_policy_episode(env, obstacles, setup, st.weights, st.rng);
    const double r = episode_reward(ep.path, ep.probs, ep.goal, ep.success(), cfg.alpha, cfg.r_max);
    const auto experiences = assign_rewards(ep, r, cfg.gamma, st.next_tag);
    st.next_tag += experiences.size();

    const Batch batch = make_batch(st.buffer, experiences, static_cast<std::size_t>(cfg.batch_size), st.rng);
    st.buffer.push(experiences);
    UpdateStats stats;
    if (!batch.items.empty()) stats = update(st.weights, batch.items, encoder, cfg.learning_rate, st.rng, cfg.workers);

    st.curve.push_back({st.round, r, ep.success(), stats.loss, ep.steps(), guided});
    ++st.round;
    if (on_round) on_round(st);
  }
}

TrainingResult run_training(const EnvSpec& env, const PolicyConfig& policy, const TrainingConfig& cfg) {
  TrainingState st = start_training(policy, cfg);
  train(env, cfg, st, cfg.rounds);
  return {std::move(st.weights), std::move(st.curve)};
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "round,reward,success,loss,steps\n";
  for (const auto& p : curve)
    out << p.round << ',' << csv::format_number(p.reward) << ',' << (p.success ? 1 : 0) << ','
        << csv::format_number(p.loss) << ',' << p.steps << '\n';
}

}  // namespace driftplan
