#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpc/band.hpp"
#include "fpc/conditioning.hpp"
#include "fpc/env.hpp"
#include "fpc/eval.hpp"
#include "fpc/grpo.hpp"
#include "fpc/io.hpp"
#include "fpc/policy.hpp"

namespace fpc {

struct WorldConfig {
  int node_count = 40;
  int out_degree = 3;
  int budget = kDefaultBudget;
  int eval_count = 0;  // 0: a third of all ordered pairs
};

// How the shared base policy is produced: a weak goal-biased start followed
// by expert pretraining on part of the training split, so that some training
// questions saturate and others stay at medium accuracy.
struct BaseConfig {
  double init_strength = 0.1;
  double stop_penalty = 7.2;
  double pretrain_fraction = 0.5;
  AccuracyBand target_band;
  PretrainConfig pretrain;
};

enum class DataSource { kSaturatedPlain, kMediumPlain, kPrefixConditioned, kRefreshed };

const char* data_source_name(DataSource source);
DataSource parse_data_source(const std::string& text);

struct ArmSpec {
  std::string name;
  DataSource source = DataSource::kSaturatedPlain;
  double tau = 0.5;
};

std::vector<ArmSpec> table1_arms();

struct ExperimentPlan {
  std::uint64_t seed = 1;
  WorldConfig world;
  BaseConfig base;
  AccuracyBand saturated_band;
  AccuracyBand medium_band{12.0 / 32.0, 20.0 / 32.0};
  int scan_rollouts = 32;
  double tau = 0.5;
  std::vector<double> fractions = default_fractions();
  int sweep_rollouts = 32;
  int max_attempts = 128;
  GrpoConfig grpo = default_experiment_grpo();
  std::vector<ArmSpec> arms = table1_arms();
  // Evaluation happens at step 0, every eval_interval steps (0: never),
  // at every listed step and at the final step.
  int eval_interval = 100;
  std::vector<int> eval_steps;
  int eval_samples = 32;
  double eval_temperature = kDefaultEvalTemperature;
  int recovery_reference_samples = 32;
  int recovery_continuations = 32;
  int workers = 1;
  std::filesystem::path output_dir;  // empty: keep results in memory only

  static GrpoConfig default_experiment_grpo();

  // Throws ConfigError on inconsistent settings.
  void validate() const;
  std::vector<int> resolved_eval_steps() const;
  io::Json to_json() const;
};

struct BaseSetup {
  WorldGraph graph;
  QuestionSplit split;
  std::vector<Question> pretrain_questions;
  PretrainResult pretrain;
  std::vector<SaturationScan> saturated_scans;  // every training question
  std::vector<Question> saturated;
  std::vector<Question> medium;
  ConditionedDataset prefix_dataset;  // D' at plan.tau
  EvalReport eval;                    // base policy on the held-out split
  EvalReport train_eval;              // base policy on the training split
};

// Pretrains the base policy, scans both bands and builds D'. Throws
// EmptyResultError when either band is empty.
BaseSetup prepare_base(const ExperimentPlan& plan);

struct EvalPoint {
  int step = 0;
  double eval_pass_at_1 = 0.0;
  double train_pass_at_1 = 0.0;
};

struct ArmResult {
  ArmSpec spec;
  int dataset_size = 0;
  std::vector<EvalPoint> curve;
  std::vector<MetricRow> metrics;
  Policy policy;  // after the last step
  std::map<int, Policy> checkpoints;  // at every evaluation step
  double delta = 0.0;        // final held-out pass@1 minus the base policy's
  double train_delta = 0.0;  // same on the training split
  int peak_step = 0;
  double peak = 0.0;
};

struct ArmRun {
  int first_step = 0;  // step label of the starting policy
  int steps = 0;
  std::uint64_t run_seed = 0;
};

// Trains one arm from `start` and evaluates it at the plan's evaluation steps
// that fall inside [first_step, first_step + steps].
ArmResult run_arm(const ExperimentPlan& plan, const BaseSetup& base, const ArmSpec& spec,
                  std::span<const Prompt> prompts, const Policy& start, const ArmRun& run);

struct RecoveryComparison {
  std::vector<int> question_ids;  // qualifying for every compared policy
  std::vector<std::string> names;
  std::vector<RecoveryCurve> failure;
  std::vector<RecoveryCurve> success;
};

// Recovery curves for each named policy on the held-out split, restricted to
// questions that qualify under all of them.
RecoveryComparison compare_recovery(const ExperimentPlan& plan, const BaseSetup& base,
                                    std::span<const std::string> names,
                                    std::span<const Policy* const> policies);

struct Table1Result {
  BaseSetup base;
  std::vector<ArmResult> arms;
  RecoveryComparison recovery;  // "base" followed by the arms

  const ArmResult& arm(const std::string& name) const;
  // baseline minus accuracy at `fraction` for the named policy's curve.
  double failure_drop(const std::string& name, double fraction) const;
  double success_gain(const std::string& name, double fraction) const;
};

Table1Result run_table1(const ExperimentPlan& plan);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

struct Table1Summary {
  std::vector<std::uint64_t> seeds;
  std::vector<Table1Result> runs;
  std::vector<double> deltas(const std::string& arm) const;
  // Per-seed paired differences of deltas, a minus b.
  std::vector<double> delta_differences(const std::string& a, const std::string& b) const;
  // Per-seed paired differences of failure-prefix drops, a minus b.
  std::vector<double> drop_differences(const std::string& a, const std::string& b,
                                       double fraction) const;
  std::vector<double> gain_differences(const std::string& a, const std::string& b,
                                       double fraction) const;
};

// Runs run_table1 at each seed (output under seed_<s>/ when writing) and
// writes across-seed summaries.
Table1Summary run_table1_seeds(const ExperimentPlan& plan, std::span<const std::uint64_t> seeds);

struct TauAblationResult {
  BaseSetup base;
  std::vector<ArmResult> arms;  // "saturate" followed by one arm per tau
};

TauAblationResult run_tau_ablation(const ExperimentPlan& plan, std::span<const double> taus);

struct RefreshResult {
  BaseSetup base;
  ArmResult iteration1;
  int fork_step = 0;
  std::string fork_hash;          // hash of the checkpoint the second arm starts from
  std::string iteration1_hash;    // hash of iteration 1 at fork_step
  ConditionedDataset refreshed;   // D''
  std::optional<ArmResult> iteration2;  // empty when D'' is empty
  double prolonged_peak = 0.0;  // iteration 1, evaluation steps after the fork
  double refreshed_peak = 0.0;  // iteration 2, same steps
};

// Iteration 1 trains the failure-prefix arm for grpo.total_steps. The fork
// defaults to the evaluation step before the last one with the highest
// held-out pass@1. Iteration 2 starts from that checkpoint on D'' and runs to
// the same final step.
RefreshResult run_refresh(const ExperimentPlan& plan, std::optional<int> fork_step = {});

}  // namespace fpc
