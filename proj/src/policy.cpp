#include "driftplan/policy.hpp"

#include <algorithm>
#include <cmath>

#include "driftplan/errors.hpp"

namespace driftplan {

PolicyConfig PolicyConfig::tiny() {
  PolicyConfig c;
  c.grid_w = 8;
  c.grid_h = 8;
  c.channels = {2, 2, 2};
  c.vehicle_hidden = {4, 4};
  c.fc_hidden = {8, 8};
  c.actions = 9;
  c.dropout = 0.5;
  return c;
}

void PolicyConfig::validate() const {
  if (grid_w < 8 || grid_h < 8 || grid_w % 8 != 0 || grid_h % 8 != 0)
    throw ConfigError("policy grid must be a positive multiple of 8 in each dimension (three 2x2 pools)");
  for (int c : channels)
    if (c < 1) throw ConfigError("recurrent channel widths must be >= 1");
  for (int c : vehicle_hidden)
    if (c < 1) throw ConfigError("vehicle layer widths must be >= 1");
  for (int c : fc_hidden)
    if (c < 1) throw ConfigError("fc widths must be >= 1");
  if (actions < 2) throw ConfigError("policy needs at least two actions");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

// ---------------------------------------------------------------------------

void ObsHistory::reset(double t, const VehicleState& s) {
  entries_.clear();
  entries_.emplace_back(t, s);
}

void ObsHistory::push(double t, const VehicleState& s) {
  entries_.emplace_back(t, s);
  while (entries_.size() > static_cast<std::size_t>(kTimeSteps)) entries_.pop_front();
}

ObsKey ObsHistory::key(const Eigen::Vector2d& goal) const {
  if (entries_.empty()) throw ConfigError("observation history is empty");
  ObsKey k;
  k.goal = goal;
  const int pad = kTimeSteps - static_cast<int>(entries_.size());
  for (int i = 0; i < kTimeSteps; ++i) {
    const auto& e = entries_[static_cast<std::size_t>(std::max(0, i - pad))];
    k.times[i] = e.first;
    k.states[i] = e.second;
  }
  return k;
}

ObservationEncoder::ObservationEncoder(const DisturbanceField& field, const ObstacleMap& obstacles, double speed)
    : field_(field), obstacles_(obstacles), speed_(speed) {
  if (obstacles.grid_w() != field.grid_w() || obstacles.grid_h() != field.grid_h())
    throw ConfigError("obstacle map does not match field grid");
}

Observation ObservationEncoder::encode(const ObsKey& key) const {
  Observation obs;
  encode_into(key, obs);
  return obs;
}

void ObservationEncoder::encode_into(const ObsKey& key, Observation& obs) const {
  const int W = field_.grid_w(), H = field_.grid_h();
  const std::size_t plane = static_cast<std::size_t>(W) * H;
  const double cs = field_.cell_size();
  obs.grid_w = W;
  obs.grid_h = H;
  obs.env.resize(kTimeSteps * kInputChannels * plane);

  auto cell_of = [&](double x, double y, int& ix, int& iy) {
    ix = static_cast<int>(std::floor(x / cs));
    iy = static_cast<int>(std::floor(y / cs));
    return ix >= 0 && iy >= 0 && ix < W && iy < H;
  };

  for (int step = 0; step < kTimeSteps; ++step) {
    double* base = obs.env.data() + static_cast<std::size_t>(step) * kInputChannels * plane;
    field_.raster(key.times[step], {base, plane}, {base + plane, plane});
    double* occ = base + 2 * plane;
    for (int iy = 0; iy < H; ++iy)
      for (int ix = 0; ix < W; ++ix)
        occ[static_cast<std::size_t>(iy) * W + ix] = obstacles_.blocked_cell(ix, iy) ? kObstacleMarker : 0.0;
    int ix = 0, iy = 0;
    if (cell_of(key.goal.x(), key.goal.y(), ix, iy)) occ[static_cast<std::size_t>(iy) * W + ix] = kGoalMarker;
    const auto& s = key.states[step];
    if (cell_of(s.x, s.y, ix, iy)) occ[static_cast<std::size_t>(iy) * W + ix] = kRobotMarker;
  }

  const VehicleState& now = key.states[kTimeSteps - 1];
  const Eigen::Vector2d to_goal = key.goal - now.position();
  const double dist = to_goal.norm();
  const double diag = std::hypot(W * cs, H * cs);
  obs.vehicle[0] = speed_ * std::cos(now.theta);
  obs.vehicle[1] = speed_ * std::sin(now.theta);
  if (dist > 1e-12) {
    obs.vehicle[2] = to_goal.x() / dist;
    obs.vehicle[3] = to_goal.y() / dist;
  } else {
    obs.vehicle[2] = 0.0;
    obs.vehicle[3] = 0.0;
  }
  obs.vehicle[4] = dist / diag;
}

// ---------------------------------------------------------------------------

PolicyWeights::PolicyWeights(const PolicyConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  auto add = [&](std::string name, std::vector<int> shape) {
    TensorInfo t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.size = 1;
    for (int d : t.shape) t.size *= static_cast<std::size_t>(d);
    t.offset = tensors_.empty() ? 0 : tensors_.back().offset + tensors_.back().size;
    tensors_.push_back(std::move(t));
  };
  int c_in = kInputChannels;
  for (int l = 0; l < kRecurrentLayers; ++l) {
    const int c = cfg.channels[l];
    const std::string p = "rec" + std::to_string(l);
    add(p + ".wd", {c, c_in, 3, 3});
    add(p + ".wf", {c, c, 3, 3});
    add(p + ".b", {c});
    c_in = c;
  }
  add("veh1.w", {cfg.vehicle_hidden[0], kVehicleFeatures});
  add("veh1.b", {cfg.vehicle_hidden[0]});
  add("veh2.w", {cfg.vehicle_hidden[1], cfg.vehicle_hidden[0]});
  add("veh2.b", {cfg.vehicle_hidden[1]});
  add("fc1.w", {cfg.fc_hidden[0], cfg.env_features() + cfg.vehicle_hidden[1]});
  add("fc1.b", {cfg.fc_hidden[0]});
  add("fc2.w", {cfg.fc_hidden[1], cfg.fc_hidden[0]});
  add("fc2.b", {cfg.fc_hidden[1]});
  add("out.w", {cfg.actions, cfg.fc_hidden[1]});
  add("out.b", {cfg.actions});
  values_.assign(tensors_.back().offset + tensors_.back().size, 0.0);
}

PolicyWeights PolicyWeights::initialized(const PolicyConfig& cfg, std::uint64_t seed) {
  PolicyWeights w(cfg);
  Rng rng(seed);
  // fan_in of the unit each tensor feeds
  auto fan_in = [&](std::size_t id) -> double {
    const auto& t = w.tensors_[id];
    if (id <= rec2_b) {
      const int layer = static_cast<int>(id / 3);
      const int c_in = layer == 0 ? kInputChannels : cfg.channels[layer - 1];
      return 9.0 * (c_in + cfg.channels[layer]);
    }
    if (t.shape.size() == 2) return t.shape[1];
    return w.tensors_[id - 1].shape[1];  // bias follows its weight
  };
  for (std::size_t id = 0; id < w.tensors_.size(); ++id) {
    const double bound = 1.0 / std::sqrt(fan_in(id));
    for (double& x : w.tensor(id)) x = bound * (2.0 * uniform01(rng) - 1.0);
  }
  return w;
}

std::span<double> PolicyWeights::tensor(std::size_t id) {
  const auto& t = tensors_.at(id);
  return {values_.data() + t.offset, t.size};
}

std::span<const double> PolicyWeights::tensor(std::size_t id) const {
  const auto& t = tensors_.at(id);
  return {values_.data() + t.offset, t.size};
}

std::size_t PolicyWeights::find(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name == name) return i;
  throw ConfigError("no tensor named '" + std::string(name) + "'");
}

void PolicyWeights::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

void PolicyWeights::axpy(double a, const PolicyWeights& x) {
  if (x.values_.size() != values_.size()) throw ConfigError("weight layout mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
}

bool PolicyWeights::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

int ActionDistribution::argmax() const {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// ---------------------------------------------------------------------------

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& x : p) x /= z;
  return p;
}

namespace {

kernels::Dims layer_input_dims(const PolicyConfig& cfg, int layer) {
  const int scale = 1 << layer;
  return {layer == 0 ? kInputChannels : cfg.channels[layer - 1], cfg.grid_h / scale, cfg.grid_w / scale};
}

kernels::Dims layer_output_dims(const PolicyConfig& cfg, int layer) {
  const int scale = 1 << layer;
  return {cfg.channels[layer], cfg.grid_h / scale, cfg.grid_w / scale};
}

void dense_tanh(std::span<const double> W, std::span<const double> b, std::span<const double> x,
                std::vector<double>& y) {
  y.assign(b.begin(), b.end());
  kernels::matvec_add(W, static_cast<int>(b.size()), static_cast<int>(x.size()), x, y);
  for (double& v : y) v = std::tanh(v);
}

// g <- g * (1 - y^2)
void tanh_backward(std::vector<double>& g, const std::vector<double>& y) {
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
}

void add_to(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

const ActionDistribution& forward(const PolicyWeights& w, const Observation& obs, PolicyCache& cache,
                                  NetMode mode, Rng* rng, kernels::Backend backend) {
  const PolicyConfig& cfg = w.config();
  if (obs.grid_w != cfg.grid_w || obs.grid_h != cfg.grid_h ||
      obs.env.size() != kTimeSteps * obs.slice_size())
    throw ConfigError("observation shape does not match policy config");
  if (mode == NetMode::train && cfg.dropout > 0.0 && rng == nullptr)
    throw ConfigError("train-mode forward needs an rng for dropout");

  for (int l = 0; l < kRecurrentLayers; ++l) {
    const kernels::Dims in_d = layer_input_dims(cfg, l);
    const kernels::Dims out_d = layer_output_dims(cfg, l);
    const std::size_t plane = static_cast<std::size_t>(out_d.h) * out_d.w;
    const auto wd = w.tensor(PolicyWeights::rec_wd(l));
    const auto wf = w.tensor(PolicyWeights::rec_wf(l));
    const auto b = w.tensor(PolicyWeights::rec_b(l));
    for (int t = 0; t < kTimeSteps; ++t) {
      auto& h = cache.hidden[l][t];
      h.resize(out_d.size());
      for (int c = 0; c < out_d.c; ++c) std::fill_n(h.begin() + c * plane, plane, b[c]);
      std::span<const double> x = l == 0 ? obs.slice(t) : std::span<const double>(cache.pooled[l - 1][t]);
      kernels::conv3x3_forward(backend, x, in_d, wd, out_d.c, h);
      if (t > 0) kernels::conv3x3_forward(backend, cache.hidden[l][t - 1], out_d, wf, out_d.c, h);
      for (double& v : h) v = std::tanh(v);
      auto& p = cache.pooled[l][t];
      auto& am = cache.argmax[l][t];
      p.resize(out_d.size() / 4);
      am.resize(p.size());
      kernels::serial::maxpool2x2_forward(h, out_d, p, am);
    }
  }

  dense_tanh(w.tensor(PolicyWeights::veh1_w), w.tensor(PolicyWeights::veh1_b), obs.vehicle, cache.veh1);
  dense_tanh(w.tensor(PolicyWeights::veh2_w), w.tensor(PolicyWeights::veh2_b), cache.veh1, cache.veh2);

  const auto& env_out = cache.pooled[kRecurrentLayers - 1][kTimeSteps - 1];
  cache.concat.assign(env_out.begin(), env_out.end());
  cache.concat.insert(cache.concat.end(), cache.veh2.begin(), cache.veh2.end());

  dense_tanh(w.tensor(PolicyWeights::fc1_w), w.tensor(PolicyWeights::fc1_b), cache.concat, cache.fc1);
  cache.mask.assign(cache.fc1.size(), 1.0);
  if (mode == NetMode::train && cfg.dropout > 0.0) {
    const double keep_scale = 1.0 / (1.0 - cfg.dropout);
    for (double& m : cache.mask) m = uniform01(*rng) < cfg.dropout ? 0.0 : keep_scale;
  }
  cache.dropped.resize(cache.fc1.size());
  for (std::size_t i = 0; i < cache.fc1.size(); ++i) cache.dropped[i] = cache.fc1[i] * cache.mask[i];

  dense_tanh(w.tensor(PolicyWeights::fc2_w), w.tensor(PolicyWeights::fc2_b), cache.dropped, cache.fc2);

  const auto out_b = w.tensor(PolicyWeights::out_b);
  cache.dist.logits.assign(out_b.begin(), out_b.end());
  kernels::matvec_add(w.tensor(PolicyWeights::out_w), cfg.actions, cfg.fc_hidden[1], cache.fc2, cache.dist.logits);
  cache.dist.probs = softmax(cache.dist.logits);
  return cache.dist;
}

ActionDistribution forward(const PolicyWeights& w, const Observation& obs) {
  PolicyCache cache;
  return forward(w, obs, cache);
}

void backward(const PolicyWeights& w, const Observation& obs, PolicyCache& cache, int action, double coeff,
              PolicyWeights& grad, kernels::Backend backend) {
  const PolicyConfig& cfg = w.config();
  if (!(grad.config() == cfg)) throw ConfigError("gradient layout does not match weights");
  if (action < 0 || action >= cfg.actions) throw ConfigError("action index out of range");
  if (coeff == 0.0) return;

  const auto& probs = cache.dist.probs;
  cache.g_logits.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    cache.g_logits[i] = coeff * ((static_cast<int>(i) == action ? 1.0 : 0.0) - probs[i]);

  using P = PolicyWeights;
  auto dense_backward = [&](P::Id w_id, P::Id b_id, const std::vector<double>& x, std::vector<double>& g_y,
                            std::vector<double>* g_x) {
    kernels::outer_add(g_y, x, grad.tensor(w_id));
    add_to(grad.tensor(b_id), g_y);
    if (g_x) {
      g_x->assign(x.size(), 0.0);
      kernels::matvec_t_add(w.tensor(w_id), static_cast<int>(g_y.size()), static_cast<int>(x.size()), g_y, *g_x);
    }
  };

  dense_backward(P::out_w, P::out_b, cache.fc2, cache.g_logits, &cache.g_fc2);
  tanh_backward(cache.g_fc2, cache.fc2);
  dense_backward(P::fc2_w, P::fc2_b, cache.dropped, cache.g_fc2, &cache.g_dropped);
  cache.g_fc1.resize(cache.g_dropped.size());
  for (std::size_t i = 0; i < cache.g_fc1.size(); ++i) cache.g_fc1[i] = cache.g_dropped[i] * cache.mask[i];
  tanh_backward(cache.g_fc1, cache.fc1);
  dense_backward(P::fc1_w, P::fc1_b, cache.concat, cache.g_fc1, &cache.g_concat);

  const std::size_t n_env = static_cast<std::size_t>(cfg.env_features());
  cache.g_veh2.assign(cache.g_concat.begin() + static_cast<std::ptrdiff_t>(n_env), cache.g_concat.end());
  tanh_backward(cache.g_veh2, cache.veh2);
  dense_backward(P::veh2_w, P::veh2_b, cache.veh1, cache.g_veh2, &cache.g_veh1);
  tanh_backward(cache.g_veh1, cache.veh1);
  const std::vector<double> vehicle(obs.vehicle.begin(), obs.vehicle.end());
  dense_backward(P::veh1_w, P::veh1_b, vehicle, cache.g_veh1, nullptr);

  // Gradient w.r.t. each step's pooled output of the current layer; only the
  // final step of the last layer feeds the FC head.
  std::array<std::vector<double>, kTimeSteps> g_pooled;
  {
    const auto& top = cache.pooled[kRecurrentLayers - 1];
    for (int t = 0; t < kTimeSteps; ++t) g_pooled[t].assign(top[t].size(), 0.0);
    std::copy_n(cache.g_concat.begin(), n_env, g_pooled[kTimeSteps - 1].begin());
  }

  for (int l = kRecurrentLayers - 1; l >= 0; --l) {
    const kernels::Dims in_d = layer_input_dims(cfg, l);
    const kernels::Dims out_d = layer_output_dims(cfg, l);
    const std::size_t plane = static_cast<std::size_t>(out_d.h) * out_d.w;
    const auto wd = w.tensor(P::rec_wd(l));
    const auto wf = w.tensor(P::rec_wf(l));
    auto g_wd = grad.tensor(P::rec_wd(l));
    auto g_wf = grad.tensor(P::rec_wf(l));
    auto g_b = grad.tensor(P::rec_b(l));

    for (int t = 0; t < kTimeSteps; ++t) {
      cache.g_hidden[t].assign(out_d.size(), 0.0);
      kernels::serial::maxpool2x2_backward(g_pooled[t], cache.argmax[l][t], cache.g_hidden[t]);
      if (l > 0) cache.g_input[t].assign(in_d.size(), 0.0);
    }

    for (int t = kTimeSteps - 1; t >= 0; --t) {
      const auto& h = cache.hidden[l][t];
      auto& g_a = cache.g_a;
      g_a.resize(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) g_a[i] = cache.g_hidden[t][i] * (1.0 - h[i] * h[i]);
      for (int c = 0; c < out_d.c; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += g_a[c * plane + i];
        g_b[c] += s;
      }
      std::span<const double> x = l == 0 ? obs.slice(t) : std::span<const double>(cache.pooled[l - 1][t]);
      kernels::conv3x3_backward_weight(backend, g_a, out_d.c, x, in_d, g_wd);
      if (t > 0) {
        kernels::conv3x3_backward_weight(backend, g_a, out_d.c, cache.hidden[l][t - 1], out_d, g_wf);
        kernels::conv3x3_backward_input(backend, g_a, out_d.c, wf, out_d, cache.g_hidden[t - 1]);
      }
      if (l > 0) kernels::conv3x3_backward_input(backend, g_a, out_d.c, wd, in_d, cache.g_input[t]);
    }
    if (l > 0)
      for (int t = 0; t < kTimeSteps; ++t) g_pooled[t] = cache.g_input[t];
  }
}

int sample_action(std::span<const double> probs, Rng& rng) {
  const double r = uniform01(rng);
  double cum = 0.0;
  int last_nonzero = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_nonzero = static_cast<int>(i);
    cum += probs[i];
    if (r < cum) return static_cast<int>(i);
  }
  return last_nonzero;
}

int sample_action(const ActionDistribution& dist, Rng& rng) { return sample_action(dist.probs, rng); }

ControlInput action_to_control(int index, int n_actions, double u_max) {
  if (n_actions < 2) throw ConfigError("need at least two actions");
  if (index < 0 || index >= n_actions) throw ConfigError("action index " + std::to_string(index) + " out of range");
  return {u_max * (2.0 * index / (n_actions - 1) - 1.0)};
}

int nearest_action(double u, int n_actions, double u_max) {
  const double pos = (std::clamp(u / u_max, -1.0, 1.0) + 1.0) * 0.5 * (n_actions - 1);
  return std::clamp(static_cast<int>(std::lround(pos)), 0, n_actions - 1);
}

}  // namespace driftplan
