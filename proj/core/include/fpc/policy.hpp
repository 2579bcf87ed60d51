#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fpc/band.hpp"
#include "fpc/env.hpp"

namespace fpc {

// Tabular softmax policy. Logits are stored row-major over
// (current node, goal node, action slot).
struct Policy {
  int node_count = 0;
  int out_degree = 0;
  std::uint64_t graph_seed = 0;
  double temperature = 1.0;
  std::vector<double> logits;

  int slots() const { return out_degree + 1; }
  std::size_t row_offset(int current, int goal) const {
    return (static_cast<std::size_t>(current) * node_count + goal) * slots();
  }
  std::span<double> row(int current, int goal) {
    return {logits.data() + row_offset(current, goal), static_cast<std::size_t>(slots())};
  }
  std::span<const double> row(int current, int goal) const {
    return {logits.data() + row_offset(current, goal), static_cast<std::size_t>(slots())};
  }

  bool operator==(const Policy&) const = default;
};

struct InitScheme {
  enum class Kind { kUniform, kGoalBiased };
  Kind kind = Kind::kUniform;
  double strength = 0.0;
  // STOP logit away from the goal is -stop_penalty; a negative value means
  // strength * budget.
  double stop_penalty = -1.0;

  static InitScheme uniform() { return {}; }
  static InitScheme goal_biased(double strength, double stop_penalty = -1.0) {
    return {Kind::kGoalBiased, strength, stop_penalty};
  }
};

// Throws ConfigError for a non-positive goal_biased strength.
Policy init_policy(const WorldGraph& graph, InitScheme scheme);

// Throws ContractViolation when the policy shape does not match the graph.
void check_compatible(const Policy& policy, const WorldGraph& graph);

void softmax(std::span<const double> logits, double temperature, std::span<double> out);
double log_softmax_at(std::span<const double> logits, double temperature, int slot);

struct StepLogProb {
  int current = 0;
  int goal = 0;
  int slot = 0;
  double logprob = 0.0;
};

// Samples a continuation from the state reached by `prefix`. The trajectory
// records the prefix, the sampled actions, their log-probabilities at
// `temperature`, and the verified reward. Pure in (policy, prefix, seed).
Trajectory sample_rollout(const Policy& policy, const WorldGraph& graph,
                          const Question& question, std::span<const Token> prefix,
                          const EpisodeState& initial, std::uint64_t seed,
                          double temperature);
Trajectory sample_rollout(const Policy& policy, const WorldGraph& graph,
                          const Question& question, std::span<const Token> prefix,
                          std::uint64_t seed, double temperature);

// Log-probabilities of the sampled continuation under the current logits at
// policy.temperature. Throws ContractViolation when the trajectory is illegal.
std::vector<StepLogProb> log_prob(const Policy& policy, const WorldGraph& graph,
                                  const Question& question, const Trajectory& trajectory);

// d log pi(slot | row) / d row = (onehot(slot) - softmax(row / T)) / T.
struct RowGradient {
  std::size_t row_offset = 0;
  std::vector<double> values;
};

RowGradient logprob_gradient(const Policy& policy, int current, int goal, int slot);

// Number of successes over n rollouts from `prefix`, rollout i seeded with
// derive_seed({seed, i}).
int count_successes(const Policy& policy, const WorldGraph& graph,
                    const Question& question, std::span<const Token> prefix, int n,
                    std::uint64_t seed, double temperature);

struct PretrainConfig {
  double learning_rate = 0.5;
  double smoothing = 0.05;
  int max_iterations = 50;
  int scan_every = 1;
  int scan_rollouts = 32;
  double target_fraction = 0.1;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct PretrainResult {
  Policy policy;
  std::vector<Question> in_band;
  int iterations = 0;
  double in_band_fraction = 0.0;
  double mean_accuracy = 0.0;
  bool reached = false;
};

// Supervised cross-entropy toward shortest-path actions (STOP at the goal)
// with a label-smoothing floor, teacher-forced along each question's
// shortest path. Stops at the first scan where at least target_fraction of
// questions fall inside `band`; when max_iterations is hit first, returns the
// last policy with reached = false.
PretrainResult pretrain_to_saturation(Policy policy, const WorldGraph& graph,
                                      std::span<const Question> questions,
                                      const AccuracyBand& band,
                                      const PretrainConfig& config);

}  // namespace fpc
