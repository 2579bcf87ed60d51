#include <benchmark/benchmark.h>

#include "fpc/conditioning.hpp"
#include "fpc/env.hpp"
#include "fpc/eval.hpp"
#include "fpc/grpo.hpp"
#include "fpc/policy.hpp"
#include "fpc/rng.hpp"

using namespace fpc;

namespace {

const WorldGraph& world() {
  static const WorldGraph g = build_graph(40, 3, 1);
  return g;
}

const Question& question() {
  static const Question q = enumerate_questions(world(), 1).front();
  return q;
}

void BM_Rollout(benchmark::State& state) {
  const auto policy = init_policy(world(), InitScheme::goal_biased(0.1, 7.2));
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_rollout(policy, world(), question(), {}, derive_seed({1, i++}), 1.0));
  }
}
BENCHMARK(BM_Rollout);

void BM_GrpoStep(benchmark::State& state) {
  auto policy = init_policy(world(), InitScheme::goal_biased(0.1, 7.2));
  GrpoConfig config;
  const auto questions = enumerate_questions(world(), 1);
  std::vector<RolloutGroup> batch;
  for (int i = 0; i < config.batch_size; ++i) {
    batch.push_back(sample_group(policy, world(), Prompt{questions[i], {}},
                                 derive_seed({2, static_cast<std::uint64_t>(i)}), config));
  }
  for (auto _ : state) {
    auto p = policy;
    benchmark::DoNotOptimize(grpo_step(p, world(), batch, config));
  }
}
BENCHMARK(BM_GrpoStep)->Unit(benchmark::kMicrosecond);

void BM_PassAtK(benchmark::State& state) {
  for (auto _ : state) {
    for (int k : {1, 2, 4, 8, 16, 32}) benchmark::DoNotOptimize(pass_at_k(32, 17, k));
  }
}
BENCHMARK(BM_PassAtK);

void BM_EstimateAccuracy(benchmark::State& state) {
  const auto policy = init_policy(world(), InitScheme::goal_biased(0.1, 7.2));
  const int n = static_cast<int>(state.range(0));
  std::uint64_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_accuracy(policy, world(), question(), {}, n, i++));
  }
}
BENCHMARK(BM_EstimateAccuracy)->Arg(32)->Arg(4096)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
