#include "fpc/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpc/error.hpp"
#include "fpc/parallel.hpp"
#include "fpc/rng.hpp"

namespace fpc {

namespace {

constexpr double kTieTolerance = 1e-12;

std::uint64_t fraction_key(double fraction) {
  return static_cast<std::uint64_t>(std::llround(fraction * 1000.0));
}

int histogram_bin(double value) {
  return std::clamp(static_cast<int>(std::floor(value * 10.0 + 1e-9)), 0, 9);
}

std::vector<HistogramBin> empty_histogram() {
  std::vector<HistogramBin> bins(10);
  for (int i = 0; i < 10; ++i) bins[i].lower = i / 10.0;
  return bins;
}

ConditionedDataset sweep_failures(const Policy& policy, const WorldGraph& graph,
                                  std::span<const Question> questions,
                                  std::span<const Trajectory> failures,
                                  const SweepConfig& config, bool include_zero,
                                  const std::string& source) {
  ConditionedDataset out;
  out.selections.resize(questions.size());
  parallel_for(questions.size(), config.workers, [&](std::size_t i) {
    auto candidates = slice_prefixes(failures[i], config.fractions, include_zero);
    out.selections[i] = select_prefix(
        policy, graph, questions[i], std::move(candidates), config.tau, config.rollouts,
        derive_seed(config.run_seed, Phase::kSweep,
                    static_cast<std::uint64_t>(questions[i].question_id),
                    include_zero ? 2 : 1));
    out.selections[i].record.source = source;
  });
  for (std::size_t i = 0; i < questions.size(); ++i) {
    out.records.push_back(out.selections[i].record);
    out.failures.push_back(failures[i]);
  }
  out.diagnostics = diagnose(out.records);
  return out;
}

}  // namespace

double estimate_accuracy(const Policy& policy, const WorldGraph& graph,
                         const Question& question, std::span<const Token> prefix, int n,
                         std::uint64_t seed, double temperature) {
  if (n < 1) throw ContractViolation("estimate_accuracy: N must be >= 1");
  return static_cast<double>(
             count_successes(policy, graph, question, prefix, n, seed, temperature)) /
         n;
}

std::uint64_t scan_seed(std::uint64_t run_seed, const Question& question) {
  return derive_seed(run_seed, Phase::kScan, static_cast<std::uint64_t>(question.question_id));
}

std::vector<SaturationScan> scan_saturated(const Policy& policy, const WorldGraph& graph,
                                           std::span<const Question> questions,
                                           int rollouts, const AccuracyBand& band,
                                           std::uint64_t run_seed, int workers) {
  if (rollouts < 2) throw ConfigError("scan_saturated: N_scan must be >= 2");
  std::vector<SaturationScan> scans(questions.size());
  parallel_for(questions.size(), workers, [&](std::size_t i) {
    const Question& q = questions[i];
    const std::uint64_t seed = scan_seed(run_seed, q);
    SaturationScan& scan = scans[i];
    scan.question = q;
    scan.rollouts = rollouts;
    std::optional<Trajectory> first_failure;
    for (int r = 0; r < rollouts; ++r) {
      Trajectory t = sample_rollout(policy, graph, q, {},
                                    derive_seed({seed, static_cast<std::uint64_t>(r)}),
                                    policy.temperature);
      scan.correct += t.reward;
      if (t.reward == 0 && !first_failure) first_failure = std::move(t);
    }
    scan.accuracy = static_cast<double>(scan.correct) / rollouts;
    scan.in_band = band.contains(scan.accuracy);
    if (scan.in_band) scan.failure = std::move(first_failure);
  });
  return scans;
}

std::vector<double> default_fractions() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

std::vector<PrefixCandidate> slice_prefixes(const Trajectory& failure,
                                            std::span<const double> fractions,
                                            bool include_zero) {
  const std::vector<Token> moves = failure.moves();
  if (moves.empty() && !include_zero) {
    throw ContractViolation("slice_prefixes: failure has no moves to slice");
  }
  std::vector<PrefixCandidate> out;
  auto add = [&](int length, double fraction) {
    for (auto& c : out) {
      if (c.length == length) {
        c.fraction = std::min(c.fraction, fraction);
        return;
      }
    }
    PrefixCandidate c;
    c.length = length;
    c.fraction = fraction;
    c.prefix.assign(moves.begin(), moves.begin() + length);
    out.push_back(std::move(c));
  };
  if (include_zero) add(0, 0.0);
  if (!moves.empty()) {
    const double total = static_cast<double>(moves.size());
    for (double f : fractions) {
      if (!(f > 0.0 && f <= 1.0)) {
        throw ConfigError("slice_prefixes: fractions must lie in (0, 1]");
      }
      const int alpha = std::min(
          static_cast<int>(moves.size()),
          std::max(1, static_cast<int>(std::floor(f * total + 1e-9))));
      add(alpha, f);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const PrefixCandidate& a, const PrefixCandidate& b) { return a.length < b.length; });
  return out;
}

Selection select_prefix(const Policy& policy, const WorldGraph& graph,
                        const Question& question, std::vector<PrefixCandidate> candidates,
                        double tau, int n, std::uint64_t seed) {
  if (candidates.empty()) throw ContractViolation("select_prefix: no candidates");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("select_prefix: tau must lie in (0, 1)");
  std::sort(candidates.begin(), candidates.end(),
            [](const PrefixCandidate& a, const PrefixCandidate& b) { return a.length < b.length; });
  std::size_t best = 0;
  double best_gap = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    c.accuracy = estimate_accuracy(policy, graph, question, c.prefix, n,
                                   derive_seed({seed, fraction_key(c.fraction)}),
                                   policy.temperature);
    const double gap = std::abs(c.accuracy - tau);
    if (i == 0 || gap < best_gap - kTieTolerance) {
      best = i;
      best_gap = gap;
    }
  }
  Selection sel;
  sel.record.question = question;
  sel.record.prefix = candidates[best].prefix;
  sel.record.fraction = candidates[best].fraction;
  sel.record.selected_accuracy = candidates[best].accuracy;
  sel.record.tau = tau;
  sel.sweep = std::move(candidates);
  return sel;
}

DatasetDiagnostics diagnose(std::span<const ConditionedRecord> records) {
  DatasetDiagnostics d;
  d.fraction_histogram = empty_histogram();
  d.accuracy_histogram = empty_histogram();
  for (const auto& r : records) {
    d.fraction_histogram[histogram_bin(r.fraction)].count += 1;
    d.accuracy_histogram[histogram_bin(r.selected_accuracy)].count += 1;
    d.mean_fraction += r.fraction;
    d.mean_selected_accuracy += r.selected_accuracy;
  }
  if (!records.empty()) {
    d.mean_fraction /= static_cast<double>(records.size());
    d.mean_selected_accuracy /= static_cast<double>(records.size());
  }
  return d;
}

ConditionedDataset build_dataset(const Policy& policy, const WorldGraph& graph,
                                 std::span<const SaturationScan> scans,
                                 const SweepConfig& config) {
  std::vector<Question> questions;
  std::vector<Trajectory> failures;
  std::vector<int> excluded;
  for (const auto& scan : scans) {
    if (!scan.failure) {
      throw ContractViolation("build_dataset: scan for question " +
                              std::to_string(scan.question.question_id) +
                              " carries no retained failure");
    }
    // An immediate wrong STOP leaves nothing to slice.
    if (scan.failure->moves().empty()) {
      excluded.push_back(scan.question.question_id);
      continue;
    }
    questions.push_back(scan.question);
    failures.push_back(*scan.failure);
  }
  ConditionedDataset out =
      sweep_failures(policy, graph, questions, failures, config, false, "iter1");
  out.excluded_question_ids = std::move(excluded);
  return out;
}

Harvest harvest_failure(const Policy& policy, const WorldGraph& graph,
                        const Question& question, int max_attempts, std::uint64_t seed) {
  if (max_attempts < 1) throw ConfigError("harvest_failure: max_attempts must be >= 1");
  Harvest h;
  for (int i = 0; i < max_attempts; ++i) {
    ++h.attempts;
    Trajectory t = sample_rollout(policy, graph, question, {},
                                  derive_seed({seed, static_cast<std::uint64_t>(i)}),
                                  policy.temperature);
    if (t.reward == 0) {
      h.failure = std::move(t);
      break;
    }
  }
  return h;
}

ConditionedDataset refresh_dataset(const Policy& policy, const WorldGraph& graph,
                                   std::span<const Question> questions,
                                   const SweepConfig& config, int max_attempts) {
  std::vector<Harvest> harvests(questions.size());
  parallel_for(questions.size(), config.workers, [&](std::size_t i) {
    harvests[i] = harvest_failure(
        policy, graph, questions[i], max_attempts,
        derive_seed(config.run_seed, Phase::kHarvest,
                    static_cast<std::uint64_t>(questions[i].question_id)));
  });
  std::vector<Question> kept;
  std::vector<Trajectory> failures;
  std::vector<int> excluded;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (harvests[i].failure) {
      kept.push_back(questions[i]);
      failures.push_back(*harvests[i].failure);
    } else {
      excluded.push_back(questions[i].question_id);
    }
  }
  ConditionedDataset out =
      sweep_failures(policy, graph, kept, failures, config, true, "iter2");
  out.excluded_question_ids = std::move(excluded);
  out.warning_empty = out.records.empty();
  return out;
}

std::vector<Prompt> to_prompts(std::span<const ConditionedRecord> records) {
  std::vector<Prompt> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(Prompt{r.question, r.prefix});
  return out;
}

std::vector<Prompt> to_prompts(std::span<const Question> questions) {
  std::vector<Prompt> out;
  out.reserve(questions.size());
  for (const auto& q : questions) out.push_back(Prompt{q, {}});
  return out;
}

}  // namespace fpc
