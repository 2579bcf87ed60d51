#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpc/band.hpp"
#include "fpc/env.hpp"
#include "fpc/grpo.hpp"
#include "fpc/policy.hpp"

namespace fpc {

// Fraction of N continuations from `prefix` that succeed. Rollout i uses
// derive_seed({seed, i}), the same stream a scan uses, so an empty prefix at
// the scan's seed reproduces the scan count exactly.
double estimate_accuracy(const Policy& policy, const WorldGraph& graph,
                         const Question& question, std::span<const Token> prefix, int n,
                         std::uint64_t seed, double temperature = 1.0);

struct SaturationScan {
  Question question;
  int rollouts = 0;
  int correct = 0;
  double accuracy = 0.0;
  bool in_band = false;
  std::optional<Trajectory> failure;  // first failure by index, in-band only
};

std::uint64_t scan_seed(std::uint64_t run_seed, const Question& question);

std::vector<SaturationScan> scan_saturated(const Policy& policy, const WorldGraph& graph,
                                           std::span<const Question> questions,
                                           int rollouts, const AccuracyBand& band,
                                           std::uint64_t run_seed, int workers = 1);

std::vector<double> default_fractions();

struct PrefixCandidate {
  std::vector<Token> prefix;
  int length = 0;
  double fraction = 0.0;
  double accuracy = -1.0;  // filled by select_prefix
};

// alpha = max(1, floor(fraction * moves)) for fraction > 0, alpha = 0 for the
// zero candidate; candidates with equal alpha keep the smallest fraction.
// Throws ContractViolation when the failure has no moves and include_zero is
// unset.
std::vector<PrefixCandidate> slice_prefixes(const Trajectory& failure,
                                            std::span<const double> fractions,
                                            bool include_zero);

struct ConditionedRecord {
  Question question;
  std::vector<Token> prefix;
  double fraction = 0.0;
  double selected_accuracy = 0.0;
  double tau = 0.5;
  std::string source = "iter1";
};

struct Selection {
  ConditionedRecord record;
  std::vector<PrefixCandidate> sweep;
};

// Estimates every candidate (seeded per fraction) and returns the argmin of
// |accuracy - tau|, ties toward the shorter prefix.
Selection select_prefix(const Policy& policy, const WorldGraph& graph,
                        const Question& question, std::vector<PrefixCandidate> candidates,
                        double tau, int n, std::uint64_t seed);

struct HistogramBin {
  double lower = 0.0;
  int count = 0;
};

struct DatasetDiagnostics {
  std::vector<HistogramBin> fraction_histogram;  // 10 bins of width 0.1
  std::vector<HistogramBin> accuracy_histogram;  // 10 bins of width 0.1, 1.0 in the last
  double mean_fraction = 0.0;
  double mean_selected_accuracy = 0.0;
};

struct ConditionedDataset {
  std::vector<ConditionedRecord> records;
  std::vector<Selection> selections;
  std::vector<Trajectory> failures;  // aligned with records
  DatasetDiagnostics diagnostics;
  // Refresh: no failure within max_attempts. Build: failure with no moves.
  std::vector<int> excluded_question_ids;
  bool warning_empty = false;
};

struct SweepConfig {
  double tau = 0.5;
  std::vector<double> fractions = default_fractions();
  int rollouts = 32;
  std::uint64_t run_seed = 0;
  int workers = 1;
};

DatasetDiagnostics diagnose(std::span<const ConditionedRecord> records);

// Algorithm-1 dataset from in-band scans. Questions whose retained failure is
// an immediate STOP are listed in excluded_question_ids. Throws
// ContractViolation if a scan lacks its retained failure.
ConditionedDataset build_dataset(const Policy& policy, const WorldGraph& graph,
                                 std::span<const SaturationScan> scans,
                                 const SweepConfig& config);

struct Harvest {
  std::optional<Trajectory> failure;
  int attempts = 0;
};

Harvest harvest_failure(const Policy& policy, const WorldGraph& graph,
                        const Question& question, int max_attempts, std::uint64_t seed);

// Re-harvests failures (up to max_attempts each), drops questions that never
// fail, and sweeps with the 0% candidate included. Records carry source
// "iter2". An empty result sets warning_empty.
ConditionedDataset refresh_dataset(const Policy& policy, const WorldGraph& graph,
                                   std::span<const Question> questions,
                                   const SweepConfig& config, int max_attempts = 128);

std::vector<Prompt> to_prompts(std::span<const ConditionedRecord> records);
std::vector<Prompt> to_prompts(std::span<const Question> questions);

}  // namespace fpc
