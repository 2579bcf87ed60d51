#include "fpc/env.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <string>

#include "fpc/error.hpp"
#include "fpc/rng.hpp"

namespace fpc {

namespace {

constexpr int kMaxPermutationAttempts = 20000;

void shuffle(std::vector<int>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(values[i - 1], values[j]);
  }
}

// One attempt at d edge-disjoint, loop-free permutations. Empty on failure.
std::vector<std::vector<int>> sample_permutation_union(int n, int d, Rng& rng) {
  std::vector<std::vector<int>> out(n);
  std::vector<int> perm(n);
  for (int layer = 0; layer < d; ++layer) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPermutationAttempts && !placed; ++attempt) {
      std::iota(perm.begin(), perm.end(), 0);
      shuffle(perm, rng);
      placed = true;
      for (int v = 0; v < n && placed; ++v) {
        if (perm[v] == v ||
            std::find(out[v].begin(), out[v].end(), perm[v]) != out[v].end()) {
          placed = false;
        }
      }
    }
    if (!placed) return {};
    for (int v = 0; v < n; ++v) out[v].push_back(perm[v]);
  }
  for (auto& row : out) std::sort(row.begin(), row.end());
  return out;
}

std::vector<bool> reachable_from(const std::vector<std::vector<int>>& adj, int root) {
  std::vector<bool> seen(adj.size(), false);
  std::vector<int> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace

int WorldGraph::slot_of(int from, Token token) const {
  if (token == kStop) return stop_slot();
  const auto& row = edges[from];
  const auto it = std::lower_bound(row.begin(), row.end(), token);
  if (it == row.end() || *it != token) return -1;
  return static_cast<int>(it - row.begin());
}

Token WorldGraph::token_at(int from, int slot) const {
  return slot == stop_slot() ? kStop : edges[from][slot];
}

std::vector<Token> Trajectory::full_actions() const {
  std::vector<Token> all(prefix);
  all.insert(all.end(), actions.begin(), actions.end());
  return all;
}

std::vector<Token> Trajectory::moves() const {
  std::vector<Token> all = full_actions();
  if (!all.empty() && all.back() == kStop) all.pop_back();
  return all;
}

bool is_strongly_connected(const WorldGraph& graph) {
  if (graph.node_count == 0) return false;
  const auto forward = reachable_from(graph.edges, 0);
  std::vector<std::vector<int>> reverse(graph.node_count);
  for (int u = 0; u < graph.node_count; ++u) {
    for (int v : graph.edges[u]) reverse[v].push_back(u);
  }
  const auto backward = reachable_from(reverse, 0);
  return std::all_of(forward.begin(), forward.end(), [](bool b) { return b; }) &&
         std::all_of(backward.begin(), backward.end(), [](bool b) { return b; });
}

WorldGraph build_graph(int node_count, int out_degree, std::uint64_t seed, int budget) {
  if (node_count < 4) {
    throw ConfigError("build_graph: node_count must be >= 4, got " +
                      std::to_string(node_count));
  }
  if (out_degree < 2 || out_degree >= node_count) {
    throw ConfigError("build_graph: out_degree must satisfy 2 <= d < node_count, got " +
                      std::to_string(out_degree));
  }
  if (budget < 1) {
    throw ConfigError("build_graph: budget must be positive, got " + std::to_string(budget));
  }
  WorldGraph graph;
  graph.node_count = node_count;
  graph.out_degree = out_degree;
  graph.budget = budget;
  graph.seed = seed;
  for (std::uint64_t counter = 0;; ++counter) {
    Rng rng(derive_seed(seed, Phase::kWorld, static_cast<std::uint64_t>(node_count),
                        (static_cast<std::uint64_t>(out_degree) << 32) | counter));
    graph.edges = sample_permutation_union(node_count, out_degree, rng);
    if (!graph.edges.empty() && is_strongly_connected(graph)) return graph;
  }
}

StepOutcome step(const WorldGraph& graph, const EpisodeState& state, Token action) {
  if (state.steps_used >= graph.budget) {
    throw ContractViolation("step: budget already exhausted");
  }
  if (!graph.valid_node(state.current)) {
    throw ContractViolation("step: invalid current node");
  }
  StepOutcome out;
  out.state = state;
  if (action == kStop) {
    out.terminal = true;
    out.reason = TerminalReason::kStopped;
    return out;
  }
  if (graph.slot_of(state.current, action) < 0) {
    throw ContractViolation("step: " + std::to_string(action) +
                            " is not an out-neighbor of " +
                            std::to_string(state.current));
  }
  out.state.current = action;
  out.state.steps_used += 1;
  if (out.state.steps_used == graph.budget) {
    out.terminal = true;
    out.reason = TerminalReason::kBudgetExhausted;
  }
  return out;
}

int verify(const WorldGraph& graph, const Question& question,
           std::span<const Token> actions) {
  if (!graph.valid_node(question.start) || !graph.valid_node(question.goal)) return 0;
  if (actions.size() > static_cast<std::size_t>(graph.budget)) return 0;
  int current = question.start;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Token a = actions[i];
    if (a == kStop) {
      return (i + 1 == actions.size() && current == question.goal) ? 1 : 0;
    }
    if (!graph.valid_node(current) || graph.slot_of(current, a) < 0) return 0;
    current = a;
  }
  return 0;
}

int verify(const WorldGraph& graph, const Question& question,
           const Trajectory& trajectory) {
  return verify(graph, question, trajectory.full_actions());
}

EpisodeState apply_prefix(const WorldGraph& graph, const Question& question,
                          std::span<const Token> prefix) {
  if (prefix.size() > static_cast<std::size_t>(graph.budget)) {
    throw ContractViolation("apply_prefix: prefix longer than budget");
  }
  EpisodeState state{question.start, 0, question.goal};
  for (Token a : prefix) {
    if (a == kStop) throw ContractViolation("apply_prefix: prefix contains STOP");
    if (graph.slot_of(state.current, a) < 0) {
      throw ContractViolation("apply_prefix: illegal move " + std::to_string(a) +
                              " from " + std::to_string(state.current));
    }
    state.current = a;
    state.steps_used += 1;
  }
  return state;
}

int shortest_distance(const WorldGraph& graph, int from, int to) {
  if (from == to) return 0;
  std::vector<int> dist(graph.node_count, -1);
  std::deque<int> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : graph.edges[u]) {
      if (dist[v] >= 0) continue;
      dist[v] = dist[u] + 1;
      if (v == to) return dist[v];
      queue.push_back(v);
    }
  }
  return -1;
}

std::vector<int> all_pairs_distances(const WorldGraph& graph) {
  const int n = graph.node_count;
  std::vector<int> dist(static_cast<std::size_t>(n) * n, -1);
  for (int s = 0; s < n; ++s) {
    int* row = dist.data() + static_cast<std::size_t>(s) * n;
    std::deque<int> queue{s};
    row[s] = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : graph.edges[u]) {
        if (row[v] < 0) {
          row[v] = row[u] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return dist;
}

std::vector<Question> enumerate_questions(const WorldGraph& graph, std::uint64_t seed) {
  const auto dist = all_pairs_distances(graph);
  std::vector<int> keys;
  for (int s = 0; s < graph.node_count; ++s) {
    for (int g = 0; g < graph.node_count; ++g) {
      const int d = dist[static_cast<std::size_t>(s) * graph.node_count + g];
      if (s != g && d >= 0 && d <= graph.budget - 1) keys.push_back(s * graph.node_count + g);
    }
  }
  Rng rng(derive_seed(seed, Phase::kQuestions));
  shuffle(keys, rng);
  std::vector<Question> out;
  out.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out.push_back(Question{static_cast<int>(i), keys[i] / graph.node_count,
                           keys[i] % graph.node_count});
  }
  return out;
}

QuestionSplit split_questions(const WorldGraph& graph, std::uint64_t seed, int eval_count) {
  auto all = enumerate_questions(graph, seed);
  if (eval_count < 0 || static_cast<std::size_t>(eval_count) >= all.size()) {
    throw ConfigError("split_questions: eval_count must leave training questions");
  }
  QuestionSplit split;
  split.eval.assign(all.begin(), all.begin() + eval_count);
  split.train.assign(all.begin() + eval_count, all.end());
  auto by_id = [](const Question& a, const Question& b) { return a.question_id < b.question_id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  return split;
}

}  // namespace fpc
