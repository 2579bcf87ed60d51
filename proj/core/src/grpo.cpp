#include "fpc/grpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "fpc/error.hpp"
#include "fpc/parallel.hpp"
#include "fpc/rng.hpp"

namespace fpc {

namespace {

struct ScoredToken {
  std::size_t row_offset;
  int slot;
  double old_logprob;
};

struct ScoredRollout {
  double weight;  // A_i / (B * N * |y_i|)
  double advantage;
  std::vector<ScoredToken> tokens;
};

constexpr std::uint64_t kEpochTag = 0xE90C;

}  // namespace

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo: group_size must be >= 2");
  if (!(advantage_epsilon > 0.0)) throw ConfigError("grpo: advantage epsilon must be > 0");
  if (!(clip_low > 0.0 && clip_low <= clip_high && clip_high < 1.0)) {
    throw ConfigError("grpo: require 0 < clip_low <= clip_high < 1");
  }
  if (inner_iterations < 1) throw ConfigError("grpo: inner_iterations must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("grpo: learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("grpo: batch_size must be >= 1");
  if (total_steps < 0) throw ConfigError("grpo: total_steps must be >= 0");
}

std::vector<double> compute_advantages(std::span<const int> rewards, double epsilon) {
  if (rewards.size() < 2) {
    throw ContractViolation("compute_advantages: need at least two rewards");
  }
  if (!(epsilon > 0.0)) throw ContractViolation("compute_advantages: epsilon must be > 0");
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (int r : rewards) sum += r;
  const double mean = sum / n;
  double sq = 0.0;
  for (int r : rewards) sq += (r - mean) * (r - mean);
  const double std = std::sqrt(sq / n);
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = (rewards[i] - mean) / (std + epsilon);
  }
  return adv;
}

std::pair<double, double> piecewise_advantage(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ContractViolation("piecewise_advantage: p must lie strictly inside (0, 1)");
  }
  return {std::sqrt((1.0 - p) / p), -std::sqrt(p / (1.0 - p))};
}

double question_weight(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ContractViolation("question_weight: p must lie in [0, 1]");
  }
  return std::sqrt(p * (1.0 - p));
}

double clipped_surrogate(double ratio, double advantage, double clip_low, double clip_high) {
  if (!(ratio > 0.0)) throw ContractViolation("clipped_surrogate: ratio must be positive");
  if (!(clip_low > 0.0 && clip_low <= clip_high && clip_high < 1.0)) {
    throw ContractViolation("clipped_surrogate: invalid clip bounds");
  }
  const double clipped = std::clamp(ratio, 1.0 - clip_low, 1.0 + clip_high);
  return std::min(ratio * advantage, clipped * advantage);
}

RolloutGroup make_group(Prompt prompt, std::vector<Trajectory> trajectories,
                        double epsilon) {
  RolloutGroup group;
  group.prompt = std::move(prompt);
  group.trajectories = std::move(trajectories);
  group.rewards.reserve(group.trajectories.size());
  for (const auto& t : group.trajectories) group.rewards.push_back(t.reward);
  group.advantages = compute_advantages(group.rewards, epsilon);
  const double n = static_cast<double>(group.rewards.size());
  group.mean = std::accumulate(group.rewards.begin(), group.rewards.end(), 0.0) / n;
  double sq = 0.0;
  for (int r : group.rewards) sq += (r - group.mean) * (r - group.mean);
  group.std = std::sqrt(sq / n);
  return group;
}

RolloutGroup sample_group(const Policy& policy, const WorldGraph& graph,
                          const Prompt& prompt, std::uint64_t seed,
                          const GrpoConfig& config) {
  const EpisodeState initial = apply_prefix(graph, prompt.question, prompt.prefix);
  std::vector<Trajectory> trajectories;
  trajectories.reserve(static_cast<std::size_t>(config.group_size));
  for (int i = 0; i < config.group_size; ++i) {
    trajectories.push_back(sample_rollout(policy, graph, prompt.question, prompt.prefix,
                                          initial,
                                          derive_seed({seed, static_cast<std::uint64_t>(i)}),
                                          policy.temperature));
  }
  return make_group(prompt, std::move(trajectories), config.advantage_epsilon);
}

StepStats grpo_step(Policy& policy, const WorldGraph& graph,
                    std::span<const RolloutGroup> batch, const GrpoConfig& config) {
  check_compatible(policy, graph);
  if (policy.graph_seed != graph.seed) {
    throw ContractViolation("grpo_step: policy was built for a different world");
  }
  StepStats stats;
  if (batch.empty()) return stats;

  const double batch_n = static_cast<double>(batch.size());
  std::vector<ScoredRollout> scored;
  double reward_total = 0.0;
  double abs_adv_total = 0.0;
  std::size_t rollout_count = 0;
  for (const RolloutGroup& group : batch) {
    if (group.trajectories.size() != group.advantages.size() ||
        group.trajectories.size() < 2) {
      throw ContractViolation("grpo_step: malformed rollout group");
    }
    const double group_n = static_cast<double>(group.trajectories.size());
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      const double adv = group.advantages[i];
      reward_total += traj.reward;
      abs_adv_total += std::abs(adv);
      ++rollout_count;
      if (traj.step_logprobs.size() != traj.actions.size()) {
        throw ContractViolation("grpo_step: trajectory without per-step log-probabilities");
      }
      const auto steps = log_prob(policy, graph, group.prompt.question, traj);
      ScoredRollout rollout;
      rollout.advantage = adv;
      rollout.weight =
          traj.actions.empty() ? 0.0
                               : adv / (batch_n * group_n *
                                        static_cast<double>(traj.actions.size()));
      rollout.tokens.reserve(steps.size());
      for (std::size_t t = 0; t < steps.size(); ++t) {
        rollout.tokens.push_back(ScoredToken{policy.row_offset(steps[t].current, steps[t].goal),
                                             steps[t].slot, traj.step_logprobs[t]});
      }
      scored.push_back(std::move(rollout));
    }
  }
  stats.mean_reward = reward_total / static_cast<double>(rollout_count);
  stats.mean_abs_advantage = abs_adv_total / static_cast<double>(rollout_count);

  const int slots = policy.slots();
  const double temperature = policy.temperature;
  std::vector<double> grad(policy.logits.size());
  std::vector<double> probs(static_cast<std::size_t>(slots));
  std::size_t token_total = 0;
  std::size_t clipped_total = 0;
  for (int iteration = 0; iteration < config.inner_iterations; ++iteration) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const ScoredRollout& rollout : scored) {
      for (const ScoredToken& tok : rollout.tokens) {
        ++token_total;
        if (rollout.weight == 0.0) continue;
        const std::span<const double> row(policy.logits.data() + tok.row_offset,
                                          static_cast<std::size_t>(slots));
        const double ratio =
            std::exp(log_softmax_at(row, temperature, tok.slot) - tok.old_logprob);
        const bool clipped = (rollout.advantage > 0.0 && ratio > 1.0 + config.clip_high) ||
                             (rollout.advantage < 0.0 && ratio < 1.0 - config.clip_low);
        if (clipped) {
          ++clipped_total;
          continue;
        }
        // d(-ratio * A)/d row = -A * ratio * (onehot - softmax) / T
        softmax(row, temperature, probs);
        const double scale = -rollout.weight * ratio / temperature;
        for (int s = 0; s < slots; ++s) {
          grad[tok.row_offset + s] += scale * ((s == tok.slot ? 1.0 : 0.0) - probs[s]);
        }
      }
    }
    if (iteration == 0) {
      double sq = 0.0;
      for (double g : grad) sq += g * g;
      stats.grad_norm = std::sqrt(sq);
    }
    for (std::size_t j = 0; j < grad.size(); ++j) {
      if (grad[j] != 0.0) policy.logits[j] -= config.learning_rate * grad[j];
    }
  }
  stats.clip_fraction = token_total == 0 ? 0.0
                                         : static_cast<double>(clipped_total) /
                                               static_cast<double>(token_total);
  return stats;
}

std::vector<MetricRow> train(Policy& policy, const WorldGraph& graph,
                             std::span<const Prompt> dataset, const GrpoConfig& config,
                             const TrainOptions& options) {
  config.validate();
  check_compatible(policy, graph);
  if (dataset.empty()) throw EmptyResultError("train: empty dataset");

  const std::size_t batch = std::min<std::size_t>(
      static_cast<std::size_t>(config.batch_size), dataset.size());
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(options.run_seed, Phase::kTrain, kEpochTag, epoch++));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
      }
      cursor = 0;
    }
    return order[cursor++];
  };

  std::vector<MetricRow> log;
  log.reserve(static_cast<std::size_t>(config.total_steps));
  std::vector<std::size_t> picks(batch);
  std::vector<RolloutGroup> groups(batch);
  for (int step = 1; step <= config.total_steps; ++step) {
    const auto started = std::chrono::steady_clock::now();
    for (auto& p : picks) p = next_index();
    parallel_for(batch, options.workers, [&](std::size_t j) {
      groups[j] = sample_group(
          policy, graph, dataset[picks[j]],
          derive_seed(options.run_seed, Phase::kTrain, static_cast<std::uint64_t>(step), j),
          config);
    });
    MetricRow row;
    row.step = step;
    row.stats = grpo_step(policy, graph, groups, config);
    if (options.record_wall_time) {
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - started)
                        .count();
    }
    log.push_back(row);
    if (options.on_step) options.on_step(step, policy, row);
  }
  return log;
}

}  // namespace fpc
