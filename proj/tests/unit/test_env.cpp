#include <doctest.h>

#include <set>

#include "fpc/env.hpp"
#include "fpc/error.hpp"
#include "fpc/policy.hpp"
#include "fpc/rng.hpp"
#include "oracles.hpp"

using namespace fpc;

TEST_CASE("four nodes with out-degree three is the complete digraph") {
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    const auto g = build_graph(4, 3, seed);
    CHECK(g == [&] {
      auto c = oracle::complete_graph(4, kDefaultBudget);
      c.seed = seed;
      return c;
    }());
    CHECK(is_strongly_connected(g));
  }
}

TEST_CASE("build_graph is deterministic and regular") {
  const auto a = build_graph(20, 3, 7);
  const auto b = build_graph(20, 3, 7);
  CHECK(a == b);
  CHECK(a != build_graph(20, 3, 8));
  std::vector<int> in_degree(20, 0);
  for (int u = 0; u < 20; ++u) {
    REQUIRE(a.edges[u].size() == 3);
    CHECK(std::is_sorted(a.edges[u].begin(), a.edges[u].end()));
    CHECK(std::set<int>(a.edges[u].begin(), a.edges[u].end()).size() == 3);
    for (int v : a.edges[u]) {
      CHECK(v != u);
      ++in_degree[v];
    }
  }
  for (int d : in_degree) CHECK(d == 3);
}

TEST_CASE("strong connectivity agrees with a Kosaraju oracle") {
  CHECK(oracle::count_sccs(build_graph(20, 3, 7).edges) == 1);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto g = build_graph(12 + static_cast<int>(seed % 20), 2 + static_cast<int>(seed % 3),
                               seed);
    CHECK(oracle::count_sccs(g.edges) == 1);
  }
  // Hand-made graphs on both sides of the predicate.
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    WorldGraph g;
    g.node_count = 6;
    g.out_degree = 2;
    g.budget = 6;
    g.edges.resize(6);
    for (int u = 0; u < 6; ++u) {
      std::set<int> targets;
      while (targets.size() < 2) {
        const int v = static_cast<int>(rng.uniform_index(6));
        if (v != u) targets.insert(v);
      }
      g.edges[u].assign(targets.begin(), targets.end());
    }
    CHECK(is_strongly_connected(g) == (oracle::count_sccs(g.edges) == 1));
  }
}

TEST_CASE("build_graph rejects invalid parameters") {
  CHECK_THROWS_AS(build_graph(3, 2, 1), ConfigError);
  CHECK_THROWS_AS(build_graph(10, 1, 1), ConfigError);
  CHECK_THROWS_AS(build_graph(10, 10, 1), ConfigError);
  CHECK_THROWS_AS(build_graph(10, 3, 1, 0), ConfigError);
}

TEST_CASE("step handles STOP, moves and the budget boundary") {
  const auto g = build_graph(20, 3, 7);
  const int n = g.edges[3][1];
  auto stopped = step(g, {3, 2, 9}, kStop);
  CHECK(stopped.terminal);
  CHECK(stopped.reason == TerminalReason::kStopped);
  CHECK(stopped.state.current == 3);

  auto moved = step(g, {3, 2, 9}, n);
  CHECK_FALSE(moved.terminal);
  CHECK(moved.state == EpisodeState{n, 3, 9});

  auto last = step(g, {3, g.budget - 1, 9}, n);
  CHECK(last.terminal);
  CHECK(last.reason == TerminalReason::kBudgetExhausted);
  CHECK(last.state.current == n);
  CHECK(last.state.steps_used == g.budget);

  int non_neighbor = 0;
  while (non_neighbor == 3 || g.slot_of(3, non_neighbor) >= 0) ++non_neighbor;
  CHECK_THROWS_AS(step(g, {3, 0, 9}, non_neighbor), ContractViolation);
  CHECK_THROWS_AS(step(g, {3, g.budget, 9}, kStop), ContractViolation);
}

TEST_CASE("verify examples") {
  const auto g = build_graph(20, 3, 7);
  const int n = g.edges[2][0];
  const Question one_hop{0, 2, n};
  CHECK(verify(g, one_hop, std::vector<Token>{n, kStop}) == 1);
  CHECK(verify(g, one_hop, std::vector<Token>{kStop}) == 0);
  CHECK(verify(g, one_hop, std::vector<Token>{n}) == 0);

  // A length-H walk without STOP fails even when it ends at the goal.
  std::vector<Token> walk;
  int at = 2;
  for (int i = 0; i < g.budget; ++i) {
    at = g.edges[at][0];
    walk.push_back(at);
  }
  CHECK(verify(g, Question{1, 2, at}, walk) == 0);
  // Illegal moves never throw.
  CHECK(verify(g, one_hop, std::vector<Token>{-7, kStop}) == 0);
}

TEST_CASE("a random legal walk ending with STOP at its endpoint verifies") {
  const auto g = build_graph(20, 3, 7);
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int start = static_cast<int>(rng.uniform_index(20));
    const int length = 1 + static_cast<int>(rng.uniform_index(g.budget - 1));
    std::vector<Token> actions;
    int at = start;
    for (int i = 0; i < length; ++i) {
      at = g.edges[at][rng.uniform_index(3)];
      actions.push_back(at);
    }
    actions.push_back(kStop);
    if (at == start) continue;
    CHECK(verify(g, Question{0, start, at}, actions) == 1);
  }
}

TEST_CASE("apply_prefix examples") {
  const auto g = build_graph(20, 3, 7);
  const Question q{0, 4, 11};
  CHECK(apply_prefix(g, q, {}) == EpisodeState{4, 0, 11});
  const int a = g.edges[4][2];
  const int b = g.edges[a][0];
  CHECK(apply_prefix(g, q, std::vector<Token>{a, b}) == EpisodeState{b, 2, 11});
  CHECK_THROWS_AS(apply_prefix(g, q, std::vector<Token>{kStop}), ContractViolation);
}

TEST_CASE("a prefix of length H-1 leaves one decision whose success is the STOP probability") {
  const auto g = build_graph(20, 3, 7);
  const auto policy = init_policy(g, InitScheme::goal_biased(0.4));
  // walk H-1 moves and pick the endpoint as goal
  std::vector<Token> prefix;
  int at = 5;
  for (int i = 0; i < g.budget - 1; ++i) {
    at = g.edges[at][i % 3];
    prefix.push_back(at);
  }
  const Question q{0, 5, at};
  const auto state = apply_prefix(g, q, prefix);
  CHECK(state.steps_used == g.budget - 1);
  const double exact = oracle::probabilities(policy, at, at, 1.0)[g.stop_slot()];
  CHECK(oracle::dp_accuracy(policy, g, at, at, g.budget - 1, 1.0) == doctest::Approx(exact));
  const int n = 20000;
  const int wins = count_successes(policy, g, q, prefix, n, 3, 1.0);
  const double se = std::sqrt(exact * (1 - exact) / n);
  CHECK(std::abs(static_cast<double>(wins) / n - exact) < 3 * se + 1e-12);
}

TEST_CASE("shortest distances") {
  const auto g = build_graph(20, 3, 7);
  CHECK(shortest_distance(g, 6, 6) == 0);
  CHECK(shortest_distance(g, 6, g.edges[6][1]) == 1);
  const auto complete = oracle::complete_graph(4, 12);
  const auto d = all_pairs_distances(complete);
  for (int u = 0; u < 4; ++u) {
    for (int v = 0; v < 4; ++v) CHECK(d[u * 4 + v] == (u == v ? 0 : 1));
  }
  const auto all = all_pairs_distances(g);
  for (int u = 0; u < 20; ++u) {
    for (int v = 0; v < 20; ++v) CHECK(all[u * 20 + v] == shortest_distance(g, u, v));
  }
}

TEST_CASE("questions are solvable, distinct and split without overlap") {
  const auto g = build_graph(20, 3, 7);
  const auto questions = enumerate_questions(g, 3);
  std::set<std::pair<int, int>> pairs;
  std::set<int> ids;
  for (const auto& q : questions) {
    CHECK(q.start != q.goal);
    CHECK(shortest_distance(g, q.start, q.goal) <= g.budget - 1);
    pairs.insert({q.start, q.goal});
    ids.insert(q.question_id);
  }
  CHECK(pairs.size() == questions.size());
  CHECK(ids.size() == questions.size());
  CHECK(questions == enumerate_questions(g, 3));

  const auto split = split_questions(g, 3, 50);
  CHECK(split.eval.size() == 50);
  CHECK(split.train.size() + split.eval.size() == questions.size());
  std::set<int> train_ids;
  for (const auto& q : split.train) train_ids.insert(q.question_id);
  for (const auto& q : split.eval) CHECK(train_ids.count(q.question_id) == 0);
}

TEST_CASE("prefix plus continuation never exceeds the budget") {
  const auto g = build_graph(20, 3, 7);
  const auto policy = init_policy(g, InitScheme::uniform());
  const auto questions = enumerate_questions(g, 1);
  for (int i = 0; i < 60; ++i) {
    const auto& q = questions[i];
    const auto source = sample_rollout(policy, g, q, {}, derive_seed({7, (std::uint64_t)i}), 1.0);
    const auto moves = source.moves();
    const std::size_t cut = moves.size() / 2;
    const std::vector<Token> prefix(moves.begin(), moves.begin() + cut);
    const auto t = sample_rollout(policy, g, q, prefix, derive_seed({8, (std::uint64_t)i}), 1.0);
    CHECK(static_cast<int>(t.prefix.size() + t.actions.size()) <= g.budget);
    CHECK(t.reward == verify(g, q, t));
  }
}
