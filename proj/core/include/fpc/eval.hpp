#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpc/env.hpp"
#include "fpc/policy.hpp"

namespace fpc {

// Unbiased pass@k, 1 - C(n-c, k) / C(n, k). Exact as a single rounded
// division when C(n, k) fits in 53 bits, product form otherwise. Throws
// ContractViolation unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

inline constexpr double kDefaultEvalTemperature = 0.6;

struct QuestionResult {
  int question_id = 0;
  int samples = 0;
  int correct = 0;
};

struct PassAtK {
  int k = 1;
  double value = 0.0;
};

struct EvalReport {
  std::vector<QuestionResult> questions;
  double pass_at_1 = 0.0;
  std::vector<PassAtK> pass_at_k;  // k in {1, 2, 4, 8, 16, 32}, k <= n
  double mean_length = 0.0;        // actions per episode
  double temperature = kDefaultEvalTemperature;
  int budget = 0;
};

struct EvalConfig {
  int samples = 32;
  double temperature = kDefaultEvalTemperature;
  std::optional<int> budget;  // may only lower the world budget
  std::uint64_t seed = 0;
  int workers = 1;
};

// Throws ConfigError for n < 1 or a budget above the world's.
EvalReport evaluate(const Policy& policy, const WorldGraph& graph,
                    std::span<const Question> questions, const EvalConfig& config);

struct BudgetPoint {
  int budget = 0;
  double pass_at_1 = 0.0;
};

std::vector<BudgetPoint> budget_sweep(const Policy& policy, const WorldGraph& graph,
                                      std::span<const Question> questions,
                                      std::span<const int> budgets, const EvalConfig& config);

enum class PrefixMode { kFailure, kSuccess };

const char* prefix_mode_name(PrefixMode mode);
PrefixMode parse_prefix_mode(const std::string& text);

struct CurvePoint {
  double fraction = 0.0;
  double mean_accuracy = 0.0;
};

struct RecoveryCurve {
  PrefixMode mode = PrefixMode::kFailure;
  double baseline = 0.0;  // question-averaged accuracy with the empty prefix
  std::vector<CurvePoint> points;
  int question_count = 0;
  std::vector<int> question_ids;
};

struct RecoveryConfig {
  std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int reference_samples = 32;
  int continuations = 32;
  double temperature = kDefaultEvalTemperature;
  std::uint64_t seed = 0;
  int workers = 1;
};

// Question ids for which `policy` produces at least one correct and one
// incorrect response among the reference samples.
std::vector<int> qualifying_questions(const Policy& policy, const WorldGraph& graph,
                                      std::span<const Question> questions,
                                      const RecoveryConfig& config);

// Accuracy of continuations after prefixes of one sampled exemplar per
// qualifying question, averaged with equal question weight. When
// `restrict_to` is given, only those question ids are used (cross-policy
// intersection); otherwise the policy's own qualifying set. Throws
// EmptyResultError when no question qualifies.
RecoveryCurve recovery_curve(const Policy& policy, const WorldGraph& graph,
                             std::span<const Question> questions, PrefixMode mode,
                             const RecoveryConfig& config,
                             const std::optional<std::vector<int>>& restrict_to = std::nullopt);

struct GapRow {
  double fraction = 0.0;
  double difference = 0.0;  // acc_a - acc_b
  double drop_a = 0.0;      // baseline_a - acc_a
  double drop_b = 0.0;
};

// Throws ContractViolation when modes or fractions differ.
std::vector<GapRow> recovery_gap(const RecoveryCurve& a, const RecoveryCurve& b);

}  // namespace fpc
