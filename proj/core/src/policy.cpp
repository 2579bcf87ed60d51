#include "fpc/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fpc/error.hpp"
#include "fpc/parallel.hpp"
#include "fpc/rng.hpp"

namespace fpc {

namespace {

constexpr int kMaxSlots = 64;

struct PolicyScratch {
  double probs[kMaxSlots];
};

// Optimal-move target row with a label-smoothing floor.
void expert_target(const WorldGraph& graph, const std::vector<int>& dist, int current,
                   int goal, double smoothing, std::span<double> target) {
  const int n = graph.node_count;
  const int slots = graph.slots();
  if (current == goal) {
    std::fill(target.begin(), target.end(), smoothing / slots);
    target[graph.stop_slot()] += 1.0 - smoothing;
    return;
  }
  // Away from the goal the floor covers moves only: wrong turns stay likely,
  // a premature STOP does not.
  std::fill(target.begin(), target.end(), smoothing / graph.out_degree);
  target[graph.stop_slot()] = 0.0;
  const int here = dist[static_cast<std::size_t>(current) * n + goal];
  int optimal = 0;
  for (int v : graph.edges[current]) {
    if (dist[static_cast<std::size_t>(v) * n + goal] == here - 1) ++optimal;
  }
  for (int s = 0; s < graph.out_degree; ++s) {
    const int v = graph.edges[current][s];
    if (dist[static_cast<std::size_t>(v) * n + goal] == here - 1) {
      target[s] += (1.0 - smoothing) / optimal;
    }
  }
}

int first_optimal_move(const WorldGraph& graph, const std::vector<int>& dist, int current,
                       int goal) {
  const int n = graph.node_count;
  const int here = dist[static_cast<std::size_t>(current) * n + goal];
  for (int v : graph.edges[current]) {
    if (dist[static_cast<std::size_t>(v) * n + goal] == here - 1) return v;
  }
  return -1;
}

}  // namespace

Policy init_policy(const WorldGraph& graph, InitScheme scheme) {
  if (graph.slots() > kMaxSlots) {
    throw ConfigError("init_policy: out_degree too large for the tabular policy");
  }
  Policy policy;
  policy.node_count = graph.node_count;
  policy.out_degree = graph.out_degree;
  policy.graph_seed = graph.seed;
  policy.logits.assign(static_cast<std::size_t>(graph.node_count) * graph.node_count *
                           graph.slots(),
                       0.0);
  if (scheme.kind == InitScheme::Kind::kUniform) return policy;
  if (!(scheme.strength > 0.0)) {
    throw ConfigError("init_policy: goal_biased strength must be positive");
  }
  const double stop_penalty =
      scheme.stop_penalty < 0.0 ? scheme.strength * graph.budget : scheme.stop_penalty;
  const auto dist = all_pairs_distances(graph);
  const int n = graph.node_count;
  for (int current = 0; current < n; ++current) {
    for (int goal = 0; goal < n; ++goal) {
      auto row = policy.row(current, goal);
      for (int s = 0; s < graph.out_degree; ++s) {
        const int v = graph.edges[current][s];
        row[s] = -scheme.strength * dist[static_cast<std::size_t>(v) * n + goal];
      }
      row[graph.stop_slot()] = current == goal ? 0.0 : -stop_penalty;
    }
  }
  return policy;
}

void check_compatible(const Policy& policy, const WorldGraph& graph) {
  if (policy.node_count != graph.node_count || policy.out_degree != graph.out_degree ||
      policy.logits.size() != static_cast<std::size_t>(graph.node_count) *
                                  graph.node_count * graph.slots()) {
    throw ContractViolation("policy shape does not match the world graph");
  }
}

void softmax(std::span<const double> logits, double temperature, std::span<double> out) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double z : logits) peak = std::max(peak, z / temperature);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / temperature - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= total;
}

double log_softmax_at(std::span<const double> logits, double temperature, int slot) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double z : logits) peak = std::max(peak, z / temperature);
  double total = 0.0;
  for (double z : logits) total += std::exp(z / temperature - peak);
  return logits[slot] / temperature - peak - std::log(total);
}

Trajectory sample_rollout(const Policy& policy, const WorldGraph& graph,
                          const Question& question, std::span<const Token> prefix,
                          const EpisodeState& initial, std::uint64_t seed,
                          double temperature) {
  Trajectory traj;
  traj.question_id = question.question_id;
  traj.prefix.assign(prefix.begin(), prefix.end());
  traj.terminal_reason = TerminalReason::kBudgetExhausted;
  Rng rng(seed);
  PolicyScratch scratch;
  const int slots = policy.slots();
  std::span<double> probs(scratch.probs, static_cast<std::size_t>(slots));
  EpisodeState state = initial;
  while (state.steps_used < graph.budget) {
    const auto row = policy.row(state.current, question.goal);
    softmax(row, temperature, probs);
    const double u = rng.uniform();
    int slot = slots - 1;
    double cumulative = 0.0;
    for (int s = 0; s < slots; ++s) {
      cumulative += probs[s];
      if (u < cumulative) {
        slot = s;
        break;
      }
    }
    // Rounding can leave u above the final cumulative sum; fall back to the
    // last slot with positive mass.
    while (probs[slot] <= 0.0 && slot > 0) --slot;
    const Token action = graph.token_at(state.current, slot);
    traj.actions.push_back(action);
    traj.step_logprobs.push_back(log_softmax_at(row, temperature, slot));
    const StepOutcome outcome = step(graph, state, action);
    state = outcome.state;
    if (outcome.terminal) {
      traj.terminal_reason = outcome.reason;
      break;
    }
  }
  traj.reward = (traj.terminal_reason == TerminalReason::kStopped &&
                 state.current == question.goal)
                    ? 1
                    : 0;
  return traj;
}

Trajectory sample_rollout(const Policy& policy, const WorldGraph& graph,
                          const Question& question, std::span<const Token> prefix,
                          std::uint64_t seed, double temperature) {
  const EpisodeState initial = apply_prefix(graph, question, prefix);
  return sample_rollout(policy, graph, question, prefix, initial, seed, temperature);
}

std::vector<StepLogProb> log_prob(const Policy& policy, const WorldGraph& graph,
                                  const Question& question, const Trajectory& trajectory) {
  EpisodeState state = apply_prefix(graph, question, trajectory.prefix);
  std::vector<StepLogProb> out;
  out.reserve(trajectory.actions.size());
  for (std::size_t i = 0; i < trajectory.actions.size(); ++i) {
    const Token a = trajectory.actions[i];
    if (state.steps_used >= graph.budget) {
      throw ContractViolation("log_prob: trajectory exceeds budget");
    }
    const int slot = graph.slot_of(state.current, a);
    if (slot < 0) throw ContractViolation("log_prob: illegal action in trajectory");
    if (a == kStop && i + 1 != trajectory.actions.size()) {
      throw ContractViolation("log_prob: STOP before the end of the trajectory");
    }
    out.push_back(StepLogProb{
        state.current, question.goal, slot,
        log_softmax_at(policy.row(state.current, question.goal), policy.temperature, slot)});
    if (a != kStop) {
      state.current = a;
      state.steps_used += 1;
    }
  }
  return out;
}

RowGradient logprob_gradient(const Policy& policy, int current, int goal, int slot) {
  RowGradient grad;
  grad.row_offset = policy.row_offset(current, goal);
  grad.values.resize(static_cast<std::size_t>(policy.slots()));
  softmax(policy.row(current, goal), policy.temperature, grad.values);
  for (int s = 0; s < policy.slots(); ++s) {
    grad.values[s] = ((s == slot ? 1.0 : 0.0) - grad.values[s]) / policy.temperature;
  }
  return grad;
}

int count_successes(const Policy& policy, const WorldGraph& graph,
                    const Question& question, std::span<const Token> prefix, int n,
                    std::uint64_t seed, double temperature) {
  const EpisodeState initial = apply_prefix(graph, question, prefix);
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    correct += sample_rollout(policy, graph, question, prefix, initial,
                              derive_seed({seed, static_cast<std::uint64_t>(i)}),
                              temperature)
                   .reward;
  }
  return correct;
}

PretrainResult pretrain_to_saturation(Policy policy, const WorldGraph& graph,
                                      std::span<const Question> questions,
                                      const AccuracyBand& band,
                                      const PretrainConfig& config) {
  check_compatible(policy, graph);
  if (questions.empty()) throw ConfigError("pretrain: empty question set");
  if (config.scan_every < 1 || config.scan_rollouts < 1 || config.max_iterations < 1) {
    throw ConfigError("pretrain: scan_every, scan_rollouts and max_iterations must be >= 1");
  }
  if (config.smoothing < 0.0 || config.smoothing >= 1.0) {
    throw ConfigError("pretrain: smoothing must lie in [0, 1)");
  }
  const auto dist = all_pairs_distances(graph);
  const int slots = graph.slots();
  std::vector<double> target(slots);
  std::vector<double> probs(slots);

  PretrainResult result;
  std::vector<int> correct(questions.size());
  for (int iteration = 1; iteration <= config.max_iterations; ++iteration) {
    for (const Question& q : questions) {
      int current = q.start;
      for (int t = 0; t < graph.budget; ++t) {
        expert_target(graph, dist, current, q.goal, config.smoothing, target);
        auto row = policy.row(current, q.goal);
        softmax(row, policy.temperature, probs);
        for (int s = 0; s < slots; ++s) {
          row[s] += config.learning_rate * (target[s] - probs[s]) / policy.temperature;
        }
        if (current == q.goal) break;
        current = first_optimal_move(graph, dist, current, q.goal);
      }
    }
    if (iteration % config.scan_every != 0 && iteration != config.max_iterations) continue;

    parallel_for(questions.size(), config.workers, [&](std::size_t i) {
      correct[i] = count_successes(
          policy, graph, questions[i], {}, config.scan_rollouts,
          derive_seed(config.seed, Phase::kPretrain, static_cast<std::uint64_t>(iteration),
                      static_cast<std::uint64_t>(questions[i].question_id)),
          policy.temperature);
    });
    result.in_band.clear();
    double total = 0.0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
      const double p = static_cast<double>(correct[i]) / config.scan_rollouts;
      total += p;
      if (band.contains(p)) result.in_band.push_back(questions[i]);
    }
    result.iterations = iteration;
    result.mean_accuracy = total / static_cast<double>(questions.size());
    result.in_band_fraction =
        static_cast<double>(result.in_band.size()) / static_cast<double>(questions.size());
    if (result.in_band_fraction >= config.target_fraction && !result.in_band.empty()) {
      result.reached = true;
      break;
    }
  }
  result.policy = std::move(policy);
  return result;
}

}  // namespace fpc
