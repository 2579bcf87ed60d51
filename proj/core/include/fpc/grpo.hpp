#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "fpc/env.hpp"
#include "fpc/policy.hpp"

namespace fpc {

struct GrpoConfig {
  int group_size = 16;
  double advantage_epsilon = 1e-4;
  double clip_low = 0.2;
  double clip_high = 0.4;
  int inner_iterations = 2;
  double learning_rate = 0.5;
  int batch_size = 16;
  int total_steps = 200;

  // Throws ConfigError unless 0 < clip_low <= clip_high < 1, group_size >= 2,
  // and the remaining counts are positive.
  void validate() const;
};

// Population-std normalization: A_i = (r_i - mean) / (std + eps).
// Throws ContractViolation for fewer than two rewards or eps <= 0.
std::vector<double> compute_advantages(std::span<const int> rewards, double epsilon);

// Exact advantages of a correct and an incorrect rollout at success rate p.
std::pair<double, double> piecewise_advantage(double p);

// sqrt(p (1 - p)): the reward standard deviation that scales a question's
// contribution to the policy gradient.
double question_weight(double p);

double clipped_surrogate(double ratio, double advantage, double clip_low, double clip_high);

// A prompt: a question plus optional forced prefix.
struct Prompt {
  Question question;
  std::vector<Token> prefix;
};

struct RolloutGroup {
  Prompt prompt;
  std::vector<Trajectory> trajectories;
  std::vector<int> rewards;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> advantages;
};

RolloutGroup make_group(Prompt prompt, std::vector<Trajectory> trajectories,
                        double epsilon);

struct StepStats {
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double grad_norm = 0.0;  // first inner iteration (on-policy gradient)
  double clip_fraction = 0.0;  // over all scored tokens and inner iterations
};

// One GRPO batch update: `inner_iterations` gradient-descent steps on the
// token-mean clipped surrogate, averaged over each group and then over the
// batch. Prefix tokens are not scored. Rows whose gradient is exactly zero
// are never written.
StepStats grpo_step(Policy& policy, const WorldGraph& graph,
                    std::span<const RolloutGroup> batch, const GrpoConfig& config);

// Samples config.group_size rollouts for one prompt at policy.temperature.
RolloutGroup sample_group(const Policy& policy, const WorldGraph& graph,
                          const Prompt& prompt, std::uint64_t seed,
                          const GrpoConfig& config);

struct MetricRow {
  int step = 0;
  StepStats stats;
  double wall_ms = 0.0;
};

struct TrainOptions {
  std::uint64_t run_seed = 0;
  int workers = 1;
  bool record_wall_time = false;
  // Called after every step with the updated policy.
  std::function<void(int step, const Policy& policy, const MetricRow& row)> on_step;
};

// GRPO over `dataset` for config.total_steps steps. Batches are drawn without
// replacement from a seeded per-epoch permutation. Deterministic in
// (policy, dataset, config, run_seed) for any worker count.
std::vector<MetricRow> train(Policy& policy, const WorldGraph& graph,
                             std::span<const Prompt> dataset, const GrpoConfig& config,
                             const TrainOptions& options);

}  // namespace fpc
