#pragma once

// Recurrent convolutional policy network and its hand-written gradient.
//
//   env (3 steps x 3 channels x H x W) -> 3 conv-recurrent layers, each
//       unrolled over the 3 steps: h_t = tanh(Wd * x_t + Wf * h_{t-1} + b),
//       2x2 max-pool on every step's output
//   last layer, last step -> flatten ----------------------------+
//   vehicle (5) -> FC tanh -> FC tanh ---------------------------+-> concat
//   concat -> FC1 tanh -> dropout -> FC2 tanh -> linear -> softmax over K actions

#include <array>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "driftplan/dynamics.hpp"
#include "driftplan/field.hpp"
#include "driftplan/kernels.hpp"

namespace driftplan {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline constexpr int kInputChannels = 3;
inline constexpr int kTimeSteps = 3;
inline constexpr int kRecurrentLayers = 3;
inline constexpr int kVehicleFeatures = 5;

struct PolicyConfig {
  int grid_w = 48;
  int grid_h = 48;
  std::array<int, 3> channels{8, 16, 16};
  std::array<int, 2> vehicle_hidden{16, 16};
  std::array<int, 2> fc_hidden{128, 64};
  int actions = 9;
  double dropout = 0.5;

  // 8x8 grid, 2-wide recurrent layers; used for gradient checks.
  static PolicyConfig tiny();
  void validate() const;  // grid divisible by 8, all widths >= 1, 0 <= dropout < 1
  int env_features() const { return channels[2] * (grid_w / 8) * (grid_h / 8); }
  bool operator==(const PolicyConfig&) const = default;
};

struct Observation {
  int grid_w = 0;
  int grid_h = 0;
  std::vector<double> env;  // [step][channel][y][x], oldest step first
  std::array<double, kVehicleFeatures> vehicle{};  // vx, vy, goal_dir_x, goal_dir_y, dist / diag

  std::size_t slice_size() const { return static_cast<std::size_t>(kInputChannels) * grid_w * grid_h; }
  std::span<const double> slice(int step) const { return {env.data() + step * slice_size(), slice_size()}; }
};

inline constexpr double kGoalMarker = 0.5;
inline constexpr double kRobotMarker = 1.0;
inline constexpr double kObstacleMarker = -1.0;

// Everything needed to rebuild one observation; experiences store this
// instead of the dense tensor.
struct ObsKey {
  std::array<double, kTimeSteps> times{};
  std::array<VehicleState, kTimeSteps> states{};  // oldest first
  Eigen::Vector2d goal{0.0, 0.0};
};

// Last three (time, state) samples; repeats the oldest until full.
class ObsHistory {
 public:
  void reset(double t, const VehicleState& s);
  void push(double t, const VehicleState& s);
  ObsKey key(const Eigen::Vector2d& goal) const;

 private:
  std::deque<std::pair<double, VehicleState>> entries_;
};

class ObservationEncoder {
 public:
  ObservationEncoder(const DisturbanceField& field, const ObstacleMap& obstacles, double speed);
  Observation encode(const ObsKey& key) const;
  void encode_into(const ObsKey& key, Observation& obs) const;

 private:
  const DisturbanceField& field_;
  const ObstacleMap& obstacles_;
  double speed_;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Flat parameter vector with named tensor views. Also used as the gradient
// container (same layout).
class PolicyWeights {
 public:
  // Tensor order.
  enum Id : std::size_t {
    rec0_wd, rec0_wf, rec0_b,
    rec1_wd, rec1_wf, rec1_b,
    rec2_wd, rec2_wf, rec2_b,
    veh1_w, veh1_b, veh2_w, veh2_b,
    fc1_w, fc1_b, fc2_w, fc2_b,
    out_w, out_b,
    tensor_count
  };
  static Id rec_wd(int layer) { return static_cast<Id>(rec0_wd + 3 * layer); }
  static Id rec_wf(int layer) { return static_cast<Id>(rec0_wf + 3 * layer); }
  static Id rec_b(int layer) { return static_cast<Id>(rec0_b + 3 * layer); }

  PolicyWeights() = default;
  explicit PolicyWeights(const PolicyConfig& cfg);  // all zeros
  // Uniform in +-1/sqrt(fan_in) per tensor.
  static PolicyWeights initialized(const PolicyConfig& cfg, std::uint64_t seed);

  const PolicyConfig& config() const { return cfg_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> tensor(std::size_t id);
  std::span<const double> tensor(std::size_t id) const;
  std::size_t find(std::string_view name) const;

  void set_zero();
  void axpy(double a, const PolicyWeights& x);  // this += a * x
  bool all_finite() const;
  bool operator==(const PolicyWeights& o) const { return cfg_ == o.cfg_ && values_ == o.values_; }

 private:
  PolicyConfig cfg_;
  std::vector<TensorInfo> tensors_;
  std::vector<double> values_;
};

struct ActionDistribution {
  std::vector<double> logits;
  std::vector<double> probs;
  int argmax() const;
};

enum class NetMode { eval, train };

// Activations kept for the backward pass; reusable across calls.
struct PolicyCache {
  std::array<std::array<std::vector<double>, kTimeSteps>, kRecurrentLayers> hidden;
  std::array<std::array<std::vector<double>, kTimeSteps>, kRecurrentLayers> pooled;
  std::array<std::array<std::vector<std::int32_t>, kTimeSteps>, kRecurrentLayers> argmax;
  std::vector<double> veh1, veh2, concat, fc1, mask, dropped, fc2;
  ActionDistribution dist;

  // backward scratch
  std::array<std::vector<double>, kTimeSteps> g_hidden, g_input;
  std::vector<double> g_logits, g_fc2, g_dropped, g_fc1, g_concat, g_veh2, g_veh1, g_a;
};

std::vector<double> softmax(std::span<const double> logits);

// Train mode draws a fresh dropout mask from rng (required then).
const ActionDistribution& forward(const PolicyWeights& w, const Observation& obs, PolicyCache& cache,
                                  NetMode mode = NetMode::eval, Rng* rng = nullptr,
                                  kernels::Backend backend = kernels::Backend::serial);
ActionDistribution forward(const PolicyWeights& w, const Observation& obs);

// grad += coeff * d log pi(action | obs) / d w, using activations from the
// preceding forward() on the same cache (dropout mask replayed).
void backward(const PolicyWeights& w, const Observation& obs, PolicyCache& cache, int action, double coeff,
              PolicyWeights& grad, kernels::Backend backend = kernels::Backend::serial);

int sample_action(const ActionDistribution& dist, Rng& rng);
int sample_action(std::span<const double> probs, Rng& rng);

// u = u_max * (2 i / (K - 1) - 1)
ControlInput action_to_control(int index, int n_actions, double u_max);
int nearest_action(double u, int n_actions, double u_max);

}  // namespace driftplan
