// Serial reference vs OpenMP kernels, plus whole-network passes and a batch
// gradient. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <memory>
#include <random>
#include <vector>

#include "driftplan/kernels.hpp"
#include "driftplan/policy.hpp"
#include "driftplan/training.hpp"

using namespace driftplan;
namespace k = driftplan::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = U(rng);
  return v;
}

// args: channels in, channels out, grid side
struct ConvCase {
  k::Dims d;
  int c_out;
  std::vector<double> in, w, out, grad_out, grad_in, grad_w;

  explicit ConvCase(const benchmark::State& st)
      : d{static_cast<int>(st.range(0)), static_cast<int>(st.range(2)), static_cast<int>(st.range(2))},
        c_out(static_cast<int>(st.range(1))),
        in(random_vector(d.size(), 1)),
        w(random_vector(static_cast<std::size_t>(c_out) * d.c * 9, 2)),
        out(static_cast<std::size_t>(c_out) * d.h * d.w),
        grad_out(random_vector(out.size(), 3)),
        grad_in(in.size()),
        grad_w(w.size()) {}
};

template <k::Backend B>
void BM_ConvForward(benchmark::State& st) {
  ConvCase c(st);
  for (auto _ : st) {
    std::fill(c.out.begin(), c.out.end(), 0.0);
    k::conv3x3_forward(B, c.in, c.d, c.w, c.c_out, c.out);
    benchmark::DoNotOptimize(c.out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(c.out.size()));
}

template <k::Backend B>
void BM_ConvBackwardInput(benchmark::State& st) {
  ConvCase c(st);
  for (auto _ : st) {
    std::fill(c.grad_in.begin(), c.grad_in.end(), 0.0);
    k::conv3x3_backward_input(B, c.grad_out, c.c_out, c.w, c.d, c.grad_in);
    benchmark::DoNotOptimize(c.grad_in.data());
  }
}

template <k::Backend B>
void BM_ConvBackwardWeight(benchmark::State& st) {
  ConvCase c(st);
  for (auto _ : st) {
    std::fill(c.grad_w.begin(), c.grad_w.end(), 0.0);
    k::conv3x3_backward_weight(B, c.grad_out, c.c_out, c.in, c.d, c.grad_w);
    benchmark::DoNotOptimize(c.grad_w.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({3, 8, 48})->Args({8, 16, 24})->Args({16, 16, 12})->Args({16, 16, 48});
}

Observation random_observation(const PolicyConfig& cfg) {
  Observation obs;
  obs.grid_w = cfg.grid_w;
  obs.grid_h = cfg.grid_h;
  obs.env = random_vector(obs.slice_size() * kTimeSteps, 4);
  obs.vehicle = {0.5, 0.5, 0.6, 0.8, 0.3};
  return obs;
}

template <k::Backend B>
void BM_PolicyForwardBackward(benchmark::State& st) {
  const PolicyConfig cfg;  // full 48x48 network
  const auto w = PolicyWeights::initialized(cfg, 1);
  const auto obs = random_observation(cfg);
  PolicyCache cache;
  PolicyWeights grad(cfg);
  Rng rng(1);
  for (auto _ : st) {
    forward(w, obs, cache, NetMode::train, &rng, B);
    backward(w, obs, cache, 3, 1.0, grad, B);
    benchmark::DoNotOptimize(grad.values().data());
  }
}

// One training update's gradient over a batch; arg: batch size.
void BM_BatchGradient(benchmark::State& st) {
  PolicyConfig cfg;
  cfg.grid_w = cfg.grid_h = 16;
  cfg.channels = {4, 8, 8};
  cfg.fc_hidden = {64, 32};
  FieldPatternSpec spec;
  spec.kind = PatternKind::spin;
  spec.strength = 0.04;
  const auto field = generate(spec, 16, 16, 1, 1.0);
  const ObstacleMap obstacles(16, 16, 1.0, true);
  const ObservationEncoder enc(field, obstacles, 1.0);
  const auto w = PolicyWeights::initialized(cfg, 2);
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> U(1.5, 14.5);
  std::vector<Experience> batch(static_cast<std::size_t>(st.range(0)));
  for (auto& e : batch) {
    for (int t = 0; t < kTimeSteps; ++t) e.obs.states[t] = {U(g), U(g), 0.0};
    e.obs.goal = {U(g), U(g)};
    e.action = static_cast<int>(g() % 9);
    e.q_hat = 0.5;
  }
  const int workers = static_cast<int>(st.range(1));
  PolicyWeights grad;
  Rng rng(3);
  for (auto _ : st) {
    policy_gradient(w, batch, enc, rng, grad, workers);
    benchmark::DoNotOptimize(grad.values().data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(BM_ConvForward<k::Backend::serial>)->Apply(conv_args);
BENCHMARK(BM_ConvForward<k::Backend::omp>)->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<k::Backend::serial>)->Apply(conv_args);
BENCHMARK(BM_ConvBackwardInput<k::Backend::omp>)->Apply(conv_args);
BENCHMARK(BM_ConvBackwardWeight<k::Backend::serial>)->Apply(conv_args);
BENCHMARK(BM_ConvBackwardWeight<k::Backend::omp>)->Apply(conv_args);
BENCHMARK(BM_PolicyForwardBackward<k::Backend::serial>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PolicyForwardBackward<k::Backend::omp>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient)->Args({100, 1})->Args({100, 2})->Args({500, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
