#include <doctest.h>

#include <cmath>

#include "fpc/conditioning.hpp"
#include "fpc/env.hpp"
#include "fpc/error.hpp"
#include "fpc/eval.hpp"
#include "fpc/policy.hpp"
#include "fpc/rng.hpp"
#include "oracles.hpp"

using namespace fpc;

TEST_CASE("pass_at_k examples") {
  CHECK(pass_at_k(32, 31, 1) == 0.96875);
  CHECK(pass_at_k(2, 1, 2) == 1.0);
  CHECK(pass_at_k(10, 3, 4) == oracle::pass_at_k_enumerated(10, 3, 4));
  CHECK_THROWS_AS(pass_at_k(4, 5, 1), ContractViolation);
  CHECK_THROWS_AS(pass_at_k(4, 2, 0), ContractViolation);
  CHECK_THROWS_AS(pass_at_k(4, 2, 5), ContractViolation);
}

TEST_CASE("pass_at_k equals subset enumeration for n up to 10") {
  for (int n = 1; n <= 10; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) CHECK(pass_at_k(n, c, k) == oracle::pass_at_k_enumerated(n, c, k));
    }
  }
}

TEST_CASE("pass_at_k properties") {
  for (int n : {1, 7, 32, 64, 100}) {
    for (int c = 0; c <= n; ++c) {
      CHECK(pass_at_k(n, c, 1) == static_cast<double>(c) / n);
      for (int k = 1; k <= n; ++k) {
        const double v = pass_at_k(n, c, k);
        if (k > 1) CHECK(v >= pass_at_k(n, c, k - 1));
        if (c > 0) CHECK(v >= pass_at_k(n, c - 1, k));
        if (c > n - k) CHECK(v == 1.0);
      }
    }
  }
}

TEST_CASE("finite-horizon oracle agrees with exhaustive enumeration on a tiny world") {
  // Enumerate every action sequence on the 4-node complete graph with budget 4.
  const auto g = oracle::complete_graph(4, 4);
  Policy p = init_policy(g, InitScheme::uniform());
  Rng rng(2);
  for (double& x : p.logits) x = rng.uniform() * 2 - 1;
  const Question q{0, 0, 2};
  double total = 0.0;
  std::function<void(int, int, double)> walk = [&](int at, int used, double prob) {
    const auto probs = oracle::probabilities(p, at, q.goal, 1.0);
    if (at == q.goal) total += prob * probs[3];
    if (used + 1 >= g.budget) return;
    for (int s = 0; s < 3; ++s) walk(g.edges[at][s], used + 1, prob * probs[s]);
  };
  walk(0, 0, 1.0);
  CHECK(oracle::dp_accuracy(p, g, q.goal, q.start, 0, 1.0) == doctest::Approx(total));
}

TEST_CASE("uniform-policy estimates match the dynamic-programming accuracy") {
  const auto g = build_graph(20, 3, 7);
  const auto p = init_policy(g, InitScheme::uniform());
  const auto questions = enumerate_questions(g, 5);
  for (int i = 0; i < 20; ++i) {
    const auto& q = questions[i];
    const double exact = oracle::dp_accuracy(p, g, q.goal, q.start, 0, 1.0);
    const int n = 4096;
    const double est = estimate_accuracy(p, g, q, {}, n, derive_seed({3, (std::uint64_t)i}));
    const double se = std::sqrt(exact * (1 - exact) / n);
    CHECK(std::abs(est - exact) <= 3 * se);
  }
}

TEST_CASE("estimate_accuracy extremes") {
  const auto g = build_graph(20, 3, 7);
  const auto greedy = init_policy(g, InitScheme::goal_biased(60.0));
  const Question q{0, 3, 17};
  CHECK(estimate_accuracy(greedy, g, q, {}, 64, 1) == 1.0);
  std::vector<Token> full;
  int at = q.start;
  for (int i = 0; i < g.budget; ++i) {
    at = g.edges[at][0];
    full.push_back(at);
  }
  if (at != q.goal) CHECK(estimate_accuracy(greedy, g, q, full, 16, 1) == 0.0);
  CHECK_THROWS_AS(estimate_accuracy(greedy, g, q, {}, 0, 1), ContractViolation);
}

TEST_CASE("evaluate extremes and the uniform oracle") {
  const auto g = build_graph(20, 3, 7);
  const auto questions = enumerate_questions(g, 6);
  const std::vector<Question> some(questions.begin(), questions.begin() + 30);
  EvalConfig config;
  config.seed = 4;

  const auto greedy = evaluate(init_policy(g, InitScheme::goal_biased(60.0)), g, some, config);
  CHECK(greedy.pass_at_1 == 1.0);
  REQUIRE(greedy.pass_at_k.size() == 6);
  for (const auto& pk : greedy.pass_at_k) CHECK(pk.value == 1.0);

  // STOP dominates everywhere: every episode stops at the start.
  Policy stopper = init_policy(g, InitScheme::uniform());
  for (int c = 0; c < 20; ++c) {
    for (int goal = 0; goal < 20; ++goal) stopper.row(c, goal)[3] = 100.0;
  }
  const auto none = evaluate(stopper, g, some, config);
  CHECK(none.pass_at_k.back().k == 32);
  CHECK(none.pass_at_k.back().value == 0.0);
  CHECK(none.mean_length == 1.0);

  const auto uniform = init_policy(g, InitScheme::uniform());
  config.samples = 512;
  config.temperature = 1.0;
  const auto report = evaluate(uniform, g, some, config);
  double exact = 0.0;
  for (const auto& q : some) exact += oracle::dp_accuracy(uniform, g, q.goal, q.start, 0, 1.0);
  exact /= static_cast<double>(some.size());
  // per-question variances bound the standard error of the mean
  double var = 0.0;
  for (const auto& q : some) {
    const double a = oracle::dp_accuracy(uniform, g, q.goal, q.start, 0, 1.0);
    var += a * (1 - a) / config.samples;
  }
  const double se = std::sqrt(var) / static_cast<double>(some.size());
  CHECK(std::abs(report.pass_at_1 - exact) <= 3 * se);

  config.workers = 4;
  const auto parallel = evaluate(uniform, g, some, config);
  CHECK(parallel.pass_at_1 == report.pass_at_1);
  CHECK(parallel.mean_length == report.mean_length);
}

TEST_CASE("budget sweep") {
  const auto g = build_graph(20, 3, 7);
  const auto questions = enumerate_questions(g, 6);
  std::vector<Question> far;
  for (const auto& q : questions) {
    if (shortest_distance(g, q.start, q.goal) >= 2) far.push_back(q);
    if (far.size() == 25) break;
  }
  const auto policy = init_policy(g, InitScheme::goal_biased(1.5, 6.0));
  EvalConfig config;
  config.seed = 8;
  const std::vector<int> budgets{1, 4, 8, 12};
  const auto points = budget_sweep(policy, g, far, budgets, config);
  REQUIRE(points.size() == 4);
  CHECK(points[0].pass_at_1 == 0.0);
  CHECK(points[1].pass_at_1 <= points[2].pass_at_1);
  CHECK(points[2].pass_at_1 <= points[3].pass_at_1);
  CHECK(points[3].pass_at_1 == evaluate(policy, g, far, config).pass_at_1);
  config.budget = 13;
  CHECK_THROWS_AS(evaluate(policy, g, far, config), ConfigError);
}

TEST_CASE("recovery curves") {
  const auto g = build_graph(20, 3, 7);
  const auto questions = enumerate_questions(g, 6);
  const std::vector<Question> some(questions.begin(), questions.begin() + 60);
  RecoveryConfig config;
  config.seed = 3;

  SUBCASE("success prefixes of the greedy solver keep accuracy at one") {
    const auto greedy = init_policy(g, InitScheme::goal_biased(60.0));
    std::vector<int> ids;
    for (const auto& q : some) ids.push_back(q.question_id);
    const auto curve = recovery_curve(greedy, g, some, PrefixMode::kSuccess, config, ids);
    CHECK(curve.baseline == 1.0);
    for (const auto& pt : curve.points) CHECK(pt.mean_accuracy == 1.0);
    CHECK_THROWS_AS(recovery_curve(greedy, g, some, PrefixMode::kFailure, config),
                    EmptyResultError);
  }

  SUBCASE("failure prefixes hurt a noisy policy and the gap to itself is zero") {
    const auto policy = init_policy(g, InitScheme::goal_biased(1.0, 4.0));
    const auto curve = recovery_curve(policy, g, some, PrefixMode::kFailure, config);
    REQUIRE(curve.question_count > 10);
    std::vector<double> f, acc;
    for (const auto& pt : curve.points) {
      f.push_back(pt.fraction);
      acc.push_back(pt.mean_accuracy);
    }
    CHECK(oracle::spearman(f, acc) < 0.0);
    for (const auto& row : recovery_gap(curve, curve)) {
      CHECK(row.difference == 0.0);
      CHECK(row.drop_a == row.drop_b);
    }
    const auto success = recovery_curve(policy, g, some, PrefixMode::kSuccess, config);
    CHECK_THROWS_AS(recovery_gap(curve, success), ContractViolation);

    // The baseline is the plain estimator at the fraction-0 continuation seed.
    const int id = curve.question_ids.front();
    Question q{};
    for (const auto& x : some) {
      if (x.question_id == id) q = x;
    }
    const auto single =
        recovery_curve(policy, g, some, PrefixMode::kFailure, config, std::vector<int>{id});
    const double plain = estimate_accuracy(
        policy, g, q, {}, config.continuations,
        derive_seed(config.seed, Phase::kRecoveryContinuation, static_cast<std::uint64_t>(id),
                    static_cast<std::uint64_t>(PrefixMode::kFailure)),
        config.temperature);
    CHECK(single.baseline == plain);
  }
}
