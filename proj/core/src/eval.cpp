#include "fpc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpc/error.hpp"
#include "fpc/parallel.hpp"
#include "fpc/rng.hpp"

namespace fpc {

namespace {

constexpr int kReportedK[] = {1, 2, 4, 8, 16, 32};

// Exact C(n, k) while it stays below 2^53, otherwise nullopt.
std::optional<std::uint64_t> exact_binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t value = 1;
  for (int i = 1; i <= k; ++i) {
    // value * (n - k + i) / i stays integral at every step.
    const std::uint64_t numer = static_cast<std::uint64_t>(n - k + i);
    if (value > (std::uint64_t{1} << 53) / numer) return std::nullopt;
    value = value * numer / static_cast<std::uint64_t>(i);
  }
  return value;
}

std::uint64_t fraction_key(double fraction) {
  return static_cast<std::uint64_t>(std::llround(fraction * 1000.0));
}

WorldGraph with_budget(const WorldGraph& graph, std::optional<int> budget) {
  if (!budget) return graph;
  if (*budget < 1 || *budget > graph.budget) {
    throw ConfigError("evaluation budget must lie in [1, " + std::to_string(graph.budget) +
                      "], got " + std::to_string(*budget));
  }
  WorldGraph out = graph;
  out.budget = *budget;
  return out;
}

struct QuestionCurve {
  bool used = false;
  double baseline = 0.0;
  std::vector<double> accuracy;
};

}  // namespace

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw ContractViolation("pass_at_k: require 0 <= c <= n, n >= 1");
  if (k < 1 || k > n) throw ContractViolation("pass_at_k: require 1 <= k <= n");
  if (n - c < k) return 1.0;
  const auto total = exact_binomial(n, k);
  const auto misses = exact_binomial(n - c, k);
  if (total && misses) {
    return static_cast<double>(*total - *misses) / static_cast<double>(*total);
  }
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - miss;
}

EvalReport evaluate(const Policy& policy, const WorldGraph& graph,
                    std::span<const Question> questions, const EvalConfig& config) {
  if (config.samples < 1) throw ConfigError("evaluate: n must be >= 1");
  if (!(config.temperature > 0.0)) throw ConfigError("evaluate: temperature must be > 0");
  check_compatible(policy, graph);
  const WorldGraph world = with_budget(graph, config.budget);
  EvalReport report;
  report.temperature = config.temperature;
  report.budget = world.budget;
  report.questions.resize(questions.size());
  std::vector<double> lengths(questions.size(), 0.0);
  parallel_for(questions.size(), config.workers, [&](std::size_t i) {
    const Question& q = questions[i];
    const std::uint64_t seed =
        derive_seed(config.seed, Phase::kEval, static_cast<std::uint64_t>(q.question_id));
    QuestionResult& r = report.questions[i];
    r.question_id = q.question_id;
    r.samples = config.samples;
    const EpisodeState initial{q.start, 0, q.goal};
    for (int s = 0; s < config.samples; ++s) {
      const Trajectory t =
          sample_rollout(policy, world, q, {}, initial,
                         derive_seed({seed, static_cast<std::uint64_t>(s)}), config.temperature);
      r.correct += t.reward;
      lengths[i] += static_cast<double>(t.actions.size());
    }
  });
  if (questions.empty()) return report;
  const double count = static_cast<double>(questions.size());
  double length_total = 0.0;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    report.pass_at_1 += static_cast<double>(report.questions[i].correct) / config.samples;
    length_total += lengths[i];
  }
  report.pass_at_1 /= count;
  report.mean_length = length_total / (count * config.samples);
  for (int k : kReportedK) {
    if (k > config.samples) break;
    PassAtK entry{k, 0.0};
    for (const auto& r : report.questions) entry.value += pass_at_k(r.samples, r.correct, k);
    entry.value /= count;
    report.pass_at_k.push_back(entry);
  }
  return report;
}

std::vector<BudgetPoint> budget_sweep(const Policy& policy, const WorldGraph& graph,
                                      std::span<const Question> questions,
                                      std::span<const int> budgets, const EvalConfig& config) {
  std::vector<BudgetPoint> out;
  for (int b : budgets) {
    EvalConfig at = config;
    at.budget = b;
    out.push_back(BudgetPoint{b, evaluate(policy, graph, questions, at).pass_at_1});
  }
  return out;
}

const char* prefix_mode_name(PrefixMode mode) {
  return mode == PrefixMode::kFailure ? "failure_prefix" : "success_prefix";
}

PrefixMode parse_prefix_mode(const std::string& text) {
  if (text == "failure" || text == "failure_prefix") return PrefixMode::kFailure;
  if (text == "success" || text == "success_prefix") return PrefixMode::kSuccess;
  throw ConfigError("unknown prefix mode '" + text + "'");
}

namespace {

std::vector<Trajectory> reference_samples(const Policy& policy, const WorldGraph& graph,
                                          const Question& q, const RecoveryConfig& config) {
  const std::uint64_t seed = derive_seed(config.seed, Phase::kRecoveryReference,
                                         static_cast<std::uint64_t>(q.question_id));
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(config.reference_samples));
  const EpisodeState initial{q.start, 0, q.goal};
  for (int s = 0; s < config.reference_samples; ++s) {
    out.push_back(sample_rollout(policy, graph, q, {}, initial,
                                 derive_seed({seed, static_cast<std::uint64_t>(s)}),
                                 config.temperature));
  }
  return out;
}

}  // namespace

std::vector<int> qualifying_questions(const Policy& policy, const WorldGraph& graph,
                                      std::span<const Question> questions,
                                      const RecoveryConfig& config) {
  std::vector<char> ok(questions.size(), 0);
  parallel_for(questions.size(), config.workers, [&](std::size_t i) {
    int correct = 0;
    for (const auto& t : reference_samples(policy, graph, questions[i], config)) {
      correct += t.reward;
    }
    ok[i] = correct > 0 && correct < config.reference_samples;
  });
  std::vector<int> ids;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (ok[i]) ids.push_back(questions[i].question_id);
  }
  return ids;
}

RecoveryCurve recovery_curve(const Policy& policy, const WorldGraph& graph,
                             std::span<const Question> questions, PrefixMode mode,
                             const RecoveryConfig& config,
                             const std::optional<std::vector<int>>& restrict_to) {
  if (config.reference_samples < 2 || config.continuations < 1) {
    throw ConfigError("recovery_curve: need >= 2 reference samples and >= 1 continuation");
  }
  for (std::size_t i = 1; i < config.fractions.size(); ++i) {
    if (!(config.fractions[i] > config.fractions[i - 1])) {
      throw ConfigError("recovery_curve: fractions must be strictly increasing");
    }
  }
  check_compatible(policy, graph);
  const std::vector<int> ids =
      restrict_to ? *restrict_to : qualifying_questions(policy, graph, questions, config);
  std::vector<Question> chosen;
  for (const auto& q : questions) {
    if (std::find(ids.begin(), ids.end(), q.question_id) != ids.end()) chosen.push_back(q);
  }

  const int wanted = mode == PrefixMode::kSuccess ? 1 : 0;
  std::vector<QuestionCurve> per_question(chosen.size());
  parallel_for(chosen.size(), config.workers, [&](std::size_t i) {
    const Question& q = chosen[i];
    const auto refs = reference_samples(policy, graph, q, config);
    std::vector<const Trajectory*> pool;
    for (const auto& t : refs) {
      if (t.reward == wanted) pool.push_back(&t);
    }
    if (pool.empty()) return;
    Rng pick(derive_seed(config.seed, Phase::kRecoveryExemplar,
                         static_cast<std::uint64_t>(q.question_id),
                         static_cast<std::uint64_t>(mode)));
    const std::vector<Token> moves = pool[pick.uniform_index(pool.size())]->moves();
    const double total = static_cast<double>(moves.size());
    auto continuation_seed = [&](double fraction) {
      return derive_seed(config.seed, Phase::kRecoveryContinuation,
                         static_cast<std::uint64_t>(q.question_id),
                         (fraction_key(fraction) << 1) | static_cast<std::uint64_t>(mode));
    };
    QuestionCurve& out = per_question[i];
    out.used = true;
    out.baseline =
        static_cast<double>(count_successes(policy, graph, q, {}, config.continuations,
                                            continuation_seed(0.0), config.temperature)) /
        config.continuations;
    for (double f : config.fractions) {
      int alpha = 0;
      if (f > 0.0) {
        alpha = std::min(static_cast<int>(moves.size()),
                         std::max(1, static_cast<int>(std::floor(f * total + 1e-9))));
      }
      const std::span<const Token> prefix(moves.data(), static_cast<std::size_t>(alpha));
      out.accuracy.push_back(
          static_cast<double>(count_successes(policy, graph, q, prefix, config.continuations,
                                              continuation_seed(f), config.temperature)) /
          config.continuations);
    }
  });

  RecoveryCurve curve;
  curve.mode = mode;
  for (double f : config.fractions) curve.points.push_back(CurvePoint{f, 0.0});
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (!per_question[i].used) continue;
    curve.question_ids.push_back(chosen[i].question_id);
    curve.baseline += per_question[i].baseline;
    for (std::size_t j = 0; j < curve.points.size(); ++j) {
      curve.points[j].mean_accuracy += per_question[i].accuracy[j];
    }
  }
  curve.question_count = static_cast<int>(curve.question_ids.size());
  if (curve.question_count == 0) {
    throw EmptyResultError("recovery_curve: no qualifying questions");
  }
  const double count = static_cast<double>(curve.question_count);
  curve.baseline /= count;
  for (auto& p : curve.points) p.mean_accuracy /= count;
  return curve;
}

std::vector<GapRow> recovery_gap(const RecoveryCurve& a, const RecoveryCurve& b) {
  if (a.mode != b.mode) throw ContractViolation("recovery_gap: curve modes differ");
  if (a.points.size() != b.points.size()) {
    throw ContractViolation("recovery_gap: fraction grids differ");
  }
  std::vector<GapRow> rows;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (std::abs(a.points[i].fraction - b.points[i].fraction) > 1e-12) {
      throw ContractViolation("recovery_gap: fraction grids differ");
    }
    rows.push_back(GapRow{a.points[i].fraction,
                          a.points[i].mean_accuracy - b.points[i].mean_accuracy,
                          a.baseline - a.points[i].mean_accuracy,
                          b.baseline - b.points[i].mean_accuracy});
  }
  return rows;
}

}  // namespace fpc
