#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fpc/band.hpp"
#include "fpc/conditioning.hpp"
#include "fpc/env.hpp"
#include "fpc/error.hpp"
#include "fpc/policy.hpp"
#include "fpc/rng.hpp"
#include "oracles.hpp"

using namespace fpc;

namespace {

Policy random_policy(const WorldGraph& g, std::uint64_t seed, double scale) {
  Policy p = init_policy(g, InitScheme::uniform());
  Rng rng(seed);
  for (double& x : p.logits) x = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

}  // namespace

TEST_CASE("uniform init gives equal probabilities") {
  const auto g = build_graph(20, 3, 7);
  const auto p = init_policy(g, InitScheme::uniform());
  CHECK(p.logits.size() == 20u * 20u * 4u);
  std::vector<double> probs(4);
  softmax(p.row(3, 9), 1.0, probs);
  for (double x : probs) CHECK(x == doctest::Approx(0.25));
  CHECK_THROWS_AS(init_policy(g, InitScheme::goal_biased(0.0)), ConfigError);
}

TEST_CASE("softmax sums to one at every state") {
  const auto g = build_graph(20, 3, 7);
  const auto p = random_policy(g, 4, 30.0);
  std::vector<double> probs(4);
  for (double t : {0.6, 1.0, 2.5}) {
    for (int c = 0; c < 20; ++c) {
      for (int goal = 0; goal < 20; ++goal) {
        softmax(p.row(c, goal), t, probs);
        const double s = std::accumulate(probs.begin(), probs.end(), 0.0);
        CHECK(std::abs(s - 1.0) <= 1e-12);
        for (int slot = 0; slot < 4; ++slot) {
          CHECK(std::exp(log_softmax_at(p.row(c, goal), t, slot)) ==
                doctest::Approx(probs[slot]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("logprob_gradient on a uniform row") {
  const auto g = build_graph(20, 3, 7);
  const auto p = init_policy(g, InitScheme::uniform());
  const auto grad = logprob_gradient(p, 2, 5, 0);
  CHECK(grad.row_offset == p.row_offset(2, 5));
  REQUIRE(grad.values.size() == 4);
  CHECK(grad.values[0] == doctest::Approx(0.75));
  for (int i = 1; i < 4; ++i) CHECK(grad.values[i] == doctest::Approx(-0.25));
}

TEST_CASE("analytic gradient matches central differences") {
  const auto g = build_graph(20, 3, 7);
  Policy p = random_policy(g, 21, 3.0);
  Rng rng(77);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = static_cast<int>(rng.uniform_index(20));
    const int goal = static_cast<int>(rng.uniform_index(20));
    const int slot = static_cast<int>(rng.uniform_index(4));
    p.temperature = trial % 2 == 0 ? 1.0 : 0.6;
    const auto grad = logprob_gradient(p, c, goal, slot);
    auto row = p.row(c, goal);
    for (int j = 0; j < 4; ++j) {
      const double saved = row[j];
      row[j] = saved + h;
      const double up = log_softmax_at(row, p.temperature, slot);
      row[j] = saved - h;
      const double down = log_softmax_at(row, p.temperature, slot);
      row[j] = saved;
      const double numeric = (up - down) / (2 * h);
      const double rel = std::abs(numeric - grad.values[j]) /
                         std::max(std::abs(grad.values[j]), 1e-3);
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("sample_rollout is deterministic and consistent with verify and log_prob") {
  const auto g = build_graph(20, 3, 7);
  const auto p = random_policy(g, 8, 2.0);
  const auto questions = enumerate_questions(g, 2);
  for (int i = 0; i < 200; ++i) {
    const auto& q = questions[i % questions.size()];
    const auto seed = derive_seed({31, static_cast<std::uint64_t>(i)});
    const auto a = sample_rollout(p, g, q, {}, seed, 1.0);
    const auto b = sample_rollout(p, g, q, {}, seed, 1.0);
    CHECK(a.actions == b.actions);
    CHECK(a.step_logprobs == b.step_logprobs);
    CHECK(a.reward == verify(g, q, a));
    const auto lp = log_prob(p, g, q, a);
    REQUIRE(lp.size() == a.actions.size());
    double total = 0.0;
    double stored = 0.0;
    for (std::size_t t = 0; t < lp.size(); ++t) {
      CHECK(lp[t].logprob == a.step_logprobs[t]);
      total += lp[t].logprob;
      stored += a.step_logprobs[t];
    }
    CHECK(total == stored);
  }
}

TEST_CASE("uniform log_prob is log of one over the slot count") {
  const auto g = build_graph(20, 3, 7);
  const auto p = init_policy(g, InitScheme::uniform());
  const Question q{0, 1, 2};
  const auto t = sample_rollout(p, g, q, {}, 5, 1.0);
  for (const auto& s : log_prob(p, g, q, t)) CHECK(s.logprob == doctest::Approx(std::log(0.25)));
}

TEST_CASE("greedy limit solves every question by its shortest path") {
  const auto g = build_graph(20, 3, 7);
  const auto p = init_policy(g, InitScheme::goal_biased(60.0));
  for (const auto& q : enumerate_questions(g, 4)) {
    const auto t = sample_rollout(p, g, q, {}, derive_seed({1, (std::uint64_t)q.question_id}), 1.0);
    CHECK(t.reward == 1);
    CHECK(static_cast<int>(t.moves().size()) == shortest_distance(g, q.start, q.goal));
    CHECK(t.terminal_reason == TerminalReason::kStopped);
  }
}

TEST_CASE("a moderate goal bias spreads accuracies over the open interval") {
  const auto g = build_graph(20, 3, 7);
  const auto p = init_policy(g, InitScheme::goal_biased(2.0, 2.0));
  const auto questions = enumerate_questions(g, 4);
  int interior = 0;
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 60; ++i) {
    const double acc = estimate_accuracy(p, g, questions[i], {}, 1024, i, 1.0);
    lo = std::min(lo, acc);
    hi = std::max(hi, acc);
    interior += acc > 0.0 && acc < 1.0 ? 1 : 0;
  }
  CHECK(interior > 30);
  CHECK(hi - lo > 0.2);
}

TEST_CASE("count_successes reuses the per-index seed stream") {
  const auto g = build_graph(20, 3, 7);
  const auto p = random_policy(g, 3, 1.0);
  const Question q{0, 2, 13};
  int manual = 0;
  for (int i = 0; i < 64; ++i) {
    manual += sample_rollout(p, g, q, {}, derive_seed({99, (std::uint64_t)i}), 1.0).reward;
  }
  CHECK(count_successes(p, g, q, {}, 64, 99, 1.0) == manual);
}

TEST_CASE("pretraining to the band [1, 1] without smoothing leaves every question near-certain") {
  const auto g = build_graph(12, 3, 5, 8);
  const auto questions = enumerate_questions(g, 1);
  PretrainConfig config;
  config.smoothing = 0.0;
  config.learning_rate = 2.0;
  config.target_fraction = 1.0;
  config.max_iterations = 400;
  config.seed = 3;
  const auto result = pretrain_to_saturation(init_policy(g, InitScheme::uniform()), g,
                                             questions, AccuracyBand{1.0, 1.0}, config);
  CHECK(result.reached);
  CHECK(result.in_band.size() == questions.size());
  const auto scans = scan_saturated(result.policy, g, questions, 32, AccuracyBand{1.0, 1.0}, 9);
  double worst = 1.0;
  for (const auto& q : questions) {
    worst = std::min(worst, oracle::dp_accuracy(result.policy, g, q.goal, q.start, 0, 1.0));
  }
  // 32/32 on the pretrainer's own scans does not make the policy exactly greedy.
  CHECK(worst >= 0.99);
  int perfect = 0;
  for (const auto& s : scans) perfect += s.correct == 32 ? 1 : 0;
  CHECK(perfect >= static_cast<int>(0.9 * scans.size()));
}

TEST_CASE("pretraining to a 30/32-31/32 band keeps one failure per in-band question") {
  const auto g = build_graph(20, 3, 7);
  const auto questions = enumerate_questions(g, 1);
  PretrainConfig config;
  config.seed = 5;
  const AccuracyBand band{30.0 / 32.0, 31.0 / 32.0};
  const auto result = pretrain_to_saturation(init_policy(g, InitScheme::goal_biased(0.1, 1.2)), g,
                                             questions, band, config);
  REQUIRE_FALSE(result.in_band.empty());
  const auto scans = scan_saturated(result.policy, g, questions, 32, band, 5);
  int kept = 0;
  for (const auto& s : scans) {
    if (!s.in_band) continue;
    ++kept;
    REQUIRE(s.failure.has_value());
    CHECK(s.failure->reward == 0);
    CHECK(verify(g, s.question, *s.failure) == 0);
  }
  CHECK(kept > 0);
}

TEST_CASE("check_compatible rejects a policy for another world") {
  const auto g = build_graph(20, 3, 7);
  const auto other = init_policy(build_graph(21, 3, 7), InitScheme::uniform());
  CHECK_THROWS_AS(check_compatible(other, g), ContractViolation);
}

TEST_CASE("uniform rollouts from a fresh start match the finite-horizon oracle") {
  const auto g = build_graph(kDefaultNodeCount, kDefaultOutDegree, 7);
  const auto p = init_policy(g, InitScheme::uniform());
  const auto questions = enumerate_questions(g, 4);
  for (int i = 0; i < 5; ++i) {
    const auto& q = questions[i * 37 % questions.size()];
    const int n = 10000;
    int wins = 0;
    for (int r = 0; r < n; ++r) {
      wins += sample_rollout(p, g, q, {}, derive_seed({17, (std::uint64_t)i, (std::uint64_t)r}), 1.0)
                  .reward;
    }
    const double exact = oracle::dp_accuracy(p, g, q.goal, q.start, 0, 1.0);
    CHECK(std::abs(static_cast<double>(wins) / n - exact) <= 3 * std::sqrt(exact * (1 - exact) / n));
  }
}
