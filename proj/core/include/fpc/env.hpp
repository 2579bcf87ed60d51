#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fpc {

// A token is either a move (the id of the node moved to) or kStop.
using Token = std::int32_t;
inline constexpr Token kStop = -1;

// Random out-regular, in-regular digraph with a per-episode step budget.
// Out-neighbors are stored in ascending order; the position of a neighbor in
// that list is its action slot, and slot `out_degree` is STOP.
struct WorldGraph {
  int node_count = 0;
  int out_degree = 0;
  int budget = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> edges;

  int slots() const { return out_degree + 1; }
  int stop_slot() const { return out_degree; }
  bool valid_node(int v) const { return v >= 0 && v < node_count; }

  // Slot of `token` at node `from`, or -1 when the move is not an edge.
  int slot_of(int from, Token token) const;
  Token token_at(int from, int slot) const;

  bool operator==(const WorldGraph&) const = default;
};

struct Question {
  int question_id = 0;
  int start = 0;
  int goal = 0;

  bool operator==(const Question&) const = default;
};

struct EpisodeState {
  int current = 0;
  int steps_used = 0;
  int goal = 0;

  bool operator==(const EpisodeState&) const = default;
};

enum class TerminalReason { kStopped, kBudgetExhausted };

// `prefix` is conditioning context (never scored); `actions` is the sampled
// continuation with one log-probability per action.
struct Trajectory {
  int question_id = 0;
  std::vector<Token> prefix;
  std::vector<Token> actions;
  std::vector<double> step_logprobs;
  int reward = 0;
  TerminalReason terminal_reason = TerminalReason::kBudgetExhausted;

  std::vector<Token> full_actions() const;
  // Moves of the full action sequence with a trailing STOP removed.
  std::vector<Token> moves() const;
};

struct StepOutcome {
  EpisodeState state;
  bool terminal = false;
  TerminalReason reason = TerminalReason::kBudgetExhausted;
};

// Default world: 20 nodes, out-degree 3, budget 12.
inline constexpr int kDefaultNodeCount = 20;
inline constexpr int kDefaultOutDegree = 3;
inline constexpr int kDefaultBudget = 12;

// Deterministic in (node_count, out_degree, seed); resamples with an internal
// counter until the digraph is strongly connected. Throws ConfigError on
// invalid parameters.
WorldGraph build_graph(int node_count, int out_degree, std::uint64_t seed,
                       int budget = kDefaultBudget);

bool is_strongly_connected(const WorldGraph& graph);

// Advances one action. Throws ContractViolation on an illegal action or an
// already exhausted budget.
StepOutcome step(const WorldGraph& graph, const EpisodeState& state, Token action);

// 1 iff replaying prefix + actions from question.start is legal, ends with
// STOP at question.goal, and stays within budget. Never throws.
int verify(const WorldGraph& graph, const Question& question,
           const Trajectory& trajectory);
int verify(const WorldGraph& graph, const Question& question,
           std::span<const Token> actions);

// State reached after forcing `prefix` from question.start. A prefix may use
// the whole budget, in which case no continuation action is possible.
EpisodeState apply_prefix(const WorldGraph& graph, const Question& question,
                          std::span<const Token> prefix);

int shortest_distance(const WorldGraph& graph, int from, int to);

// dist[from * node_count + to], all pairs by BFS.
std::vector<int> all_pairs_distances(const WorldGraph& graph);

// Every (start, goal) pair with start != goal and distance <= budget - 1,
// shuffled by `seed`, with question ids assigned in shuffled order.
std::vector<Question> enumerate_questions(const WorldGraph& graph, std::uint64_t seed);

struct QuestionSplit {
  std::vector<Question> train;
  std::vector<Question> eval;
};

QuestionSplit split_questions(const WorldGraph& graph, std::uint64_t seed,
                              int eval_count);

}  // namespace fpc
