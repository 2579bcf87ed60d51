#include "fpc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fpc/error.hpp"
#include "fpc/format.hpp"
#include "fpc/rng.hpp"

namespace fpc {

namespace fs = std::filesystem;
using io::Json;

namespace {

constexpr std::uint64_t kIteration2Tag = 2;

EvalConfig eval_config(const ExperimentPlan& plan) {
  EvalConfig c;
  c.samples = plan.eval_samples;
  c.temperature = plan.eval_temperature;
  c.seed = plan.seed;
  c.workers = plan.workers;
  return c;
}

SweepConfig sweep_config(const ExperimentPlan& plan, double tau) {
  SweepConfig c;
  c.tau = tau;
  c.fractions = plan.fractions;
  c.rollouts = plan.sweep_rollouts;
  c.run_seed = plan.seed;
  c.workers = plan.workers;
  return c;
}

std::vector<Question> in_band(std::span<const SaturationScan> scans) {
  std::vector<Question> out;
  for (const auto& s : scans) {
    if (s.in_band) out.push_back(s.question);
  }
  return out;
}

bool writing(const ExperimentPlan& plan) { return !plan.output_dir.empty(); }

void write_curve(const fs::path& path, std::span<const EvalPoint> curve) {
  std::ostringstream text;
  text << "step,eval_pass_at_1,train_pass_at_1\n";
  for (const auto& p : curve) {
    text << p.step << ',' << format_double(p.eval_pass_at_1) << ','
         << format_double(p.train_pass_at_1) << '\n';
  }
  io::write_text(path, text.str());
}

void write_base(const ExperimentPlan& plan, const BaseSetup& base) {
  const fs::path& dir = plan.output_dir;
  io::write_world(dir / "world.json", base.graph);
  io::write_questions(dir / "questions_train.jsonl", base.split.train);
  io::write_questions(dir / "questions_eval.jsonl", base.split.eval);
  io::write_policy(dir / "base" / io::checkpoint_name(0), base.pretrain.policy);
  io::write_scans(dir / "scans.jsonl", base.saturated_scans);
  io::write_questions(dir / "medium_questions.jsonl", base.medium);
  io::write_dataset(dir / "dataset.jsonl", base.prefix_dataset.records);
  io::write_sweeps(dir / "sweeps.jsonl", base.prefix_dataset.selections);
  io::write_diagnostics(dir, base.prefix_dataset.diagnostics);
  io::write_eval_report(dir / "base", "eval", base.eval);
  io::write_eval_report(dir / "base", "eval_train", base.train_eval);
}

void write_arm(const fs::path& dir, const ArmResult& arm) {
  io::write_metrics(dir / "metrics.csv", arm.metrics);
  write_curve(dir / "eval_curve.csv", arm.curve);
  for (const auto& [step, policy] : arm.checkpoints) {
    io::write_policy(dir / io::checkpoint_name(step), policy);
  }
}

Json base_manifest(const ExperimentPlan& plan, const BaseSetup& base) {
  return Json{{"world_hash", io::file_hash(plan.output_dir / "world.json")},
              {"base_checkpoint_hash", io::policy_hash(base.pretrain.policy)},
              {"pretrain_iterations", base.pretrain.iterations},
              {"pretrain_reached", base.pretrain.reached},
              {"pretrain_in_band_fraction", base.pretrain.in_band_fraction},
              {"saturated_questions", base.saturated.size()},
              {"medium_questions", base.medium.size()},
              {"dataset_records", base.prefix_dataset.records.size()},
              {"dataset_excluded", base.prefix_dataset.excluded_question_ids},
              {"dataset_hash", io::file_hash(plan.output_dir / "dataset.jsonl")},
              {"base_eval_pass_at_1", base.eval.pass_at_1},
              {"base_train_pass_at_1", base.train_eval.pass_at_1}};
}

Json arm_manifest(const ArmResult& arm) {
  Json hashes = Json::object();
  for (const auto& [step, policy] : arm.checkpoints) {
    hashes[io::checkpoint_name(step)] = io::policy_hash(policy);
  }
  return Json{{"name", arm.spec.name},
              {"source", data_source_name(arm.spec.source)},
              {"tau", arm.spec.tau},
              {"dataset_size", arm.dataset_size},
              {"delta", arm.delta},
              {"train_delta", arm.train_delta},
              {"peak_step", arm.peak_step},
              {"peak", arm.peak},
              {"checkpoints", std::move(hashes)}};
}

std::vector<Prompt> prompts_for(const BaseSetup& base, const ArmSpec& spec,
                                const ExperimentPlan& plan) {
  switch (spec.source) {
    case DataSource::kSaturatedPlain:
      return to_prompts(std::span<const Question>(base.saturated));
    case DataSource::kMediumPlain:
      return to_prompts(std::span<const Question>(base.medium));
    case DataSource::kPrefixConditioned: {
      if (std::abs(spec.tau - plan.tau) < 1e-12) {
        return to_prompts(std::span<const ConditionedRecord>(base.prefix_dataset.records));
      }
      std::vector<SaturationScan> scans;
      for (const auto& s : base.saturated_scans) {
        if (s.in_band) scans.push_back(s);
      }
      const auto ds =
          build_dataset(base.pretrain.policy, base.graph, scans, sweep_config(plan, spec.tau));
      return to_prompts(std::span<const ConditionedRecord>(ds.records));
    }
    case DataSource::kRefreshed:
      break;
  }
  throw ConfigError("arm '" + spec.name + "': refreshed data is only produced by run_refresh");
}

int index_of(std::span<const std::string> names, const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw ContractViolation("no policy named '" + name + "'");
}

double point_at(const RecoveryCurve& curve, double fraction) {
  for (const auto& p : curve.points) {
    if (std::abs(p.fraction - fraction) < 1e-9) return p.mean_accuracy;
  }
  throw ContractViolation("recovery curve has no point at fraction " + format_double(fraction));
}

}  // namespace

const char* data_source_name(DataSource source) {
  switch (source) {
    case DataSource::kSaturatedPlain: return "saturated_plain";
    case DataSource::kMediumPlain: return "medium_plain";
    case DataSource::kPrefixConditioned: return "prefix_conditioned";
    case DataSource::kRefreshed: return "refreshed";
  }
  return "unknown";
}

DataSource parse_data_source(const std::string& text) {
  if (text == "saturated_plain") return DataSource::kSaturatedPlain;
  if (text == "medium_plain") return DataSource::kMediumPlain;
  if (text == "prefix_conditioned") return DataSource::kPrefixConditioned;
  if (text == "refreshed") return DataSource::kRefreshed;
  throw ConfigError("unknown dataset source '" + text + "'");
}

std::vector<ArmSpec> table1_arms() {
  return {{"saturate", DataSource::kSaturatedPlain, 0.5},
          {"medium", DataSource::kMediumPlain, 0.5},
          {"failure_prefix", DataSource::kPrefixConditioned, 0.5}};
}

GrpoConfig ExperimentPlan::default_experiment_grpo() {
  GrpoConfig c;
  c.learning_rate = 2.0;
  c.total_steps = 800;
  return c;
}

void ExperimentPlan::validate() const {
  grpo.validate();
  if (world.eval_count < 0) throw ConfigError("plan: eval_count must be >= 0");
  if (!(base.pretrain_fraction > 0.0 && base.pretrain_fraction <= 1.0)) {
    throw ConfigError("plan: pretrain_fraction must lie in (0, 1]");
  }
  if (!(base.init_strength > 0.0)) throw ConfigError("plan: init_strength must be > 0");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("plan: tau must lie in (0, 1)");
  if (eval_interval < 0) throw ConfigError("plan: eval_interval must be >= 0");
  if (scan_rollouts < 2 || sweep_rollouts < 1 || max_attempts < 1 || eval_samples < 1) {
    throw ConfigError("plan: rollout counts must be positive (scan >= 2)");
  }
  if (recovery_reference_samples < 2 || recovery_continuations < 1) {
    throw ConfigError("plan: recovery sample counts too small");
  }
  if (arms.empty()) throw ConfigError("plan: at least one arm is required");
  std::vector<std::string> names;
  for (const auto& arm : arms) {
    if (arm.name.empty()) throw ConfigError("plan: arm names must be nonempty");
    if (std::find(names.begin(), names.end(), arm.name) != names.end() || arm.name == "base") {
      throw ConfigError("plan: duplicate or reserved arm name '" + arm.name + "'");
    }
    names.push_back(arm.name);
  }
  for (int s : eval_steps) {
    if (s < 0 || s > grpo.total_steps) {
      throw ConfigError("plan: evaluation step " + std::to_string(s) + " outside [0, steps]");
    }
  }
}

std::vector<int> ExperimentPlan::resolved_eval_steps() const {
  std::vector<int> steps = eval_steps;
  if (eval_interval > 0) {
    for (int s = eval_interval; s < grpo.total_steps; s += eval_interval) steps.push_back(s);
  }
  steps.push_back(0);
  steps.push_back(grpo.total_steps);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

Json ExperimentPlan::to_json() const {
  Json arm_list = Json::array();
  for (const auto& a : arms) {
    arm_list.push_back(
        Json{{"name", a.name}, {"source", data_source_name(a.source)}, {"tau", a.tau}});
  }
  return Json{
      {"seed", seed},
      {"world",
       {{"node_count", world.node_count},
        {"out_degree", world.out_degree},
        {"budget", world.budget},
        {"eval_count", world.eval_count}}},
      {"base",
       {{"init_strength", base.init_strength},
        {"stop_penalty", base.stop_penalty},
        {"pretrain_fraction", base.pretrain_fraction},
        {"target_band", base.target_band.to_string()},
        {"learning_rate", base.pretrain.learning_rate},
        {"smoothing", base.pretrain.smoothing},
        {"max_iterations", base.pretrain.max_iterations},
        {"scan_every", base.pretrain.scan_every},
        {"scan_rollouts", base.pretrain.scan_rollouts},
        {"target_fraction", base.pretrain.target_fraction}}},
      {"saturated_band", saturated_band.to_string()},
      {"medium_band", medium_band.to_string()},
      {"scan_rollouts", scan_rollouts},
      {"tau", tau},
      {"fractions", fractions},
      {"sweep_rollouts", sweep_rollouts},
      {"max_attempts", max_attempts},
      {"grpo",
       {{"group_size", grpo.group_size},
        {"advantage_epsilon", grpo.advantage_epsilon},
        {"clip_low", grpo.clip_low},
        {"clip_high", grpo.clip_high},
        {"inner_iterations", grpo.inner_iterations},
        {"learning_rate", grpo.learning_rate},
        {"batch_size", grpo.batch_size},
        {"total_steps", grpo.total_steps}}},
      {"arms", std::move(arm_list)},
      {"eval_interval", eval_interval},
      {"eval_steps", resolved_eval_steps()},
      {"eval_samples", eval_samples},
      {"eval_temperature", eval_temperature},
      {"recovery_reference_samples", recovery_reference_samples},
      {"recovery_continuations", recovery_continuations}};
}

BaseSetup prepare_base(const ExperimentPlan& plan) {
  plan.validate();
  BaseSetup base;
  base.graph = build_graph(plan.world.node_count, plan.world.out_degree,
                           derive_seed(plan.seed, Phase::kWorld), plan.world.budget);
  const int pairs = plan.world.node_count * plan.world.node_count;
  const int eval_count = plan.world.eval_count > 0 ? plan.world.eval_count : pairs / 3;
  base.split =
      split_questions(base.graph, derive_seed(plan.seed, Phase::kQuestions), eval_count);
  const auto take = static_cast<std::size_t>(
      std::floor(plan.base.pretrain_fraction * static_cast<double>(base.split.train.size())));
  base.pretrain_questions.assign(base.split.train.begin(),
                                 base.split.train.begin() + std::max<std::size_t>(take, 1));

  Policy start = init_policy(
      base.graph, InitScheme::goal_biased(plan.base.init_strength, plan.base.stop_penalty));
  PretrainConfig pc = plan.base.pretrain;
  pc.seed = plan.seed;
  pc.workers = plan.workers;
  base.pretrain = pretrain_to_saturation(std::move(start), base.graph, base.pretrain_questions,
                                         plan.base.target_band, pc);
  const Policy& policy = base.pretrain.policy;

  base.saturated_scans = scan_saturated(policy, base.graph, base.split.train,
                                        plan.scan_rollouts, plan.saturated_band, plan.seed,
                                        plan.workers);
  base.saturated = in_band(base.saturated_scans);
  const auto medium_scans = scan_saturated(policy, base.graph, base.split.train,
                                           plan.scan_rollouts, plan.medium_band, plan.seed,
                                           plan.workers);
  base.medium = in_band(medium_scans);
  if (base.saturated.empty()) {
    throw EmptyResultError("no training question in the saturated band " +
                           plan.saturated_band.to_string() + " after pretraining");
  }
  if (base.medium.empty()) {
    throw EmptyResultError("no training question in the medium band " +
                           plan.medium_band.to_string() + " after pretraining");
  }
  std::vector<SaturationScan> saturated_scans;
  for (const auto& s : base.saturated_scans) {
    if (s.in_band) saturated_scans.push_back(s);
  }
  base.prefix_dataset =
      build_dataset(policy, base.graph, saturated_scans, sweep_config(plan, plan.tau));
  if (base.prefix_dataset.records.empty()) {
    throw EmptyResultError("failure-prefix dataset is empty");
  }
  base.eval = evaluate(policy, base.graph, base.split.eval, eval_config(plan));
  base.train_eval = evaluate(policy, base.graph, base.split.train, eval_config(plan));
  return base;
}

ArmResult run_arm(const ExperimentPlan& plan, const BaseSetup& base, const ArmSpec& spec,
                  std::span<const Prompt> prompts, const Policy& start, const ArmRun& run) {
  ArmResult arm;
  arm.spec = spec;
  arm.dataset_size = static_cast<int>(prompts.size());
  arm.policy = start;
  const EvalConfig ec = eval_config(plan);
  std::vector<int> steps;
  for (int s : plan.resolved_eval_steps()) {
    if (s >= run.first_step && s <= run.first_step + run.steps) steps.push_back(s);
  }
  auto record = [&](int step, const Policy& policy) {
    if (!std::binary_search(steps.begin(), steps.end(), step)) return;
    arm.curve.push_back(EvalPoint{step,
                                  evaluate(policy, base.graph, base.split.eval, ec).pass_at_1,
                                  evaluate(policy, base.graph, base.split.train, ec).pass_at_1});
    arm.checkpoints.emplace(step, policy);
  };
  record(run.first_step, arm.policy);
  if (run.steps > 0) {
    GrpoConfig gc = plan.grpo;
    gc.total_steps = run.steps;
    TrainOptions options;
    options.run_seed = run.run_seed;
    options.workers = plan.workers;
    options.on_step = [&](int step, const Policy& policy, const MetricRow&) {
      record(run.first_step + step, policy);
    };
    arm.metrics = train(arm.policy, base.graph, prompts, gc, options);
    for (auto& row : arm.metrics) row.step += run.first_step;
  }
  const EvalPoint& last = arm.curve.back();
  arm.delta = last.eval_pass_at_1 - base.eval.pass_at_1;
  arm.train_delta = last.train_pass_at_1 - base.train_eval.pass_at_1;
  arm.peak = -1.0;
  for (const auto& p : arm.curve) {
    if (p.eval_pass_at_1 > arm.peak) {
      arm.peak = p.eval_pass_at_1;
      arm.peak_step = p.step;
    }
  }
  return arm;
}

RecoveryComparison compare_recovery(const ExperimentPlan& plan, const BaseSetup& base,
                                    std::span<const std::string> names,
                                    std::span<const Policy* const> policies) {
  if (names.size() != policies.size() || names.empty()) {
    throw ContractViolation("compare_recovery: names and policies must align");
  }
  RecoveryConfig rc;
  rc.fractions = plan.fractions;
  rc.reference_samples = plan.recovery_reference_samples;
  rc.continuations = plan.recovery_continuations;
  rc.temperature = plan.eval_temperature;
  rc.seed = plan.seed;
  rc.workers = plan.workers;

  RecoveryComparison out;
  out.names.assign(names.begin(), names.end());
  std::vector<int> shared;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto ids = qualifying_questions(*policies[i], base.graph, base.split.eval, rc);
    if (i == 0) {
      shared = ids;
    } else {
      std::vector<int> kept;
      for (int id : shared) {
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) kept.push_back(id);
      }
      shared = std::move(kept);
    }
  }
  if (shared.empty()) {
    throw EmptyResultError("no held-out question qualifies for every compared policy");
  }
  out.question_ids = shared;
  for (const Policy* p : policies) {
    out.failure.push_back(
        recovery_curve(*p, base.graph, base.split.eval, PrefixMode::kFailure, rc, shared));
    out.success.push_back(
        recovery_curve(*p, base.graph, base.split.eval, PrefixMode::kSuccess, rc, shared));
  }
  return out;
}

const ArmResult& Table1Result::arm(const std::string& name) const {
  for (const auto& a : arms) {
    if (a.spec.name == name) return a;
  }
  throw ContractViolation("no arm named '" + name + "'");
}

double Table1Result::failure_drop(const std::string& name, double fraction) const {
  const auto& curve = recovery.failure[static_cast<std::size_t>(index_of(recovery.names, name))];
  return curve.baseline - point_at(curve, fraction);
}

double Table1Result::success_gain(const std::string& name, double fraction) const {
  const auto& curve = recovery.success[static_cast<std::size_t>(index_of(recovery.names, name))];
  return point_at(curve, fraction) - curve.baseline;
}

Table1Result run_table1(const ExperimentPlan& plan) {
  Table1Result result;
  result.base = prepare_base(plan);
  if (writing(plan)) write_base(plan, result.base);
  for (const auto& spec : plan.arms) {
    const auto prompts = prompts_for(result.base, spec, plan);
    result.arms.push_back(run_arm(plan, result.base, spec, prompts, result.base.pretrain.policy,
                                  ArmRun{0, plan.grpo.total_steps, plan.seed}));
    if (writing(plan)) write_arm(plan.output_dir / "arms" / spec.name, result.arms.back());
  }

  std::vector<std::string> names = {"base"};
  std::vector<const Policy*> policies = {&result.base.pretrain.policy};
  for (const auto& a : result.arms) {
    names.push_back(a.spec.name);
    policies.push_back(&a.policy);
  }
  result.recovery = compare_recovery(plan, result.base, names, policies);

  if (writing(plan)) {
    std::ostringstream table;
    table << "arm,source,tau,dataset_size,eval_pass_at_1,delta,train_pass_at_1,train_delta\n";
    table << "base,,," << result.base.pretrain_questions.size() << ','
          << format_double(result.base.eval.pass_at_1) << ",0,"
          << format_double(result.base.train_eval.pass_at_1) << ",0\n";
    for (const auto& a : result.arms) {
      table << a.spec.name << ',' << data_source_name(a.spec.source) << ','
            << format_double(a.spec.tau) << ',' << a.dataset_size << ','
            << format_double(a.curve.back().eval_pass_at_1) << ',' << format_double(a.delta)
            << ',' << format_double(a.curve.back().train_pass_at_1) << ','
            << format_double(a.train_delta) << '\n';
    }
    io::write_text(plan.output_dir / "table1.csv", table.str());
    for (std::size_t i = 0; i < names.size(); ++i) {
      const RecoveryCurve curves[] = {result.recovery.failure[i], result.recovery.success[i]};
      io::write_recovery_curves(plan.output_dir / "recovery" / (names[i] + ".csv"), curves);
    }
    Json arms = Json::array();
    for (const auto& a : result.arms) arms.push_back(arm_manifest(a));
    io::write_json(plan.output_dir / "manifest.json",
                   Json{{"pipeline", "table1"},
                        {"plan", plan.to_json()},
                        {"base", base_manifest(plan, result.base)},
                        {"arms", std::move(arms)},
                        {"recovery_questions", result.recovery.question_ids}});
  }
  return result;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return out;
}

std::vector<double> Table1Summary::deltas(const std::string& arm) const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.arm(arm).delta);
  return out;
}

std::vector<double> Table1Summary::delta_differences(const std::string& a,
                                                     const std::string& b) const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.arm(a).delta - r.arm(b).delta);
  return out;
}

std::vector<double> Table1Summary::drop_differences(const std::string& a, const std::string& b,
                                                    double fraction) const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.failure_drop(a, fraction) - r.failure_drop(b, fraction));
  return out;
}

std::vector<double> Table1Summary::gain_differences(const std::string& a, const std::string& b,
                                                    double fraction) const {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(r.success_gain(a, fraction) - r.success_gain(b, fraction));
  return out;
}

Table1Summary run_table1_seeds(const ExperimentPlan& plan, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ConfigError("run_table1_seeds: no seeds");
  Table1Summary summary;
  for (std::uint64_t seed : seeds) {
    ExperimentPlan at = plan;
    at.seed = seed;
    if (writing(plan)) at.output_dir = plan.output_dir / ("seed_" + std::to_string(seed));
    summary.seeds.push_back(seed);
    summary.runs.push_back(run_table1(at));
  }
  if (!writing(plan)) return summary;

  std::ostringstream table;
  table << "arm,n_seeds,mean_delta,std_delta,mean_train_delta,std_train_delta\n";
  for (const auto& spec : plan.arms) {
    std::vector<double> train;
    for (const auto& r : summary.runs) train.push_back(r.arm(spec.name).train_delta);
    const auto d = summary.deltas(spec.name);
    const MeanStd e = mean_std(d);
    const MeanStd t = mean_std(train);
    table << spec.name << ',' << seeds.size() << ',' << format_double(e.mean) << ','
          << format_double(e.std) << ',' << format_double(t.mean) << ','
          << format_double(t.std) << '\n';
  }
  io::write_text(plan.output_dir / "table1.csv", table.str());

  std::ostringstream recovery;
  recovery << "mode,policy,fraction,mean_change,std_change\n";
  const auto& names = summary.runs.front().recovery.names;
  for (const char* mode : {"failure_prefix", "success_prefix"}) {
    const bool failure = std::string(mode) == "failure_prefix";
    for (const auto& name : names) {
      for (double f : plan.fractions) {
        std::vector<double> v;
        for (const auto& r : summary.runs) {
          v.push_back(failure ? r.failure_drop(name, f) : r.success_gain(name, f));
        }
        const MeanStd m = mean_std(v);
        recovery << mode << ',' << name << ',' << format_double(f) << ','
                 << format_double(m.mean) << ',' << format_double(m.std) << '\n';
      }
    }
  }
  io::write_text(plan.output_dir / "recovery_summary.csv", recovery.str());

  Json seeds_json = Json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seeds_json.push_back(Json{
        {"seed", seeds[i]},
        {"manifest_hash",
         io::file_hash(plan.output_dir / ("seed_" + std::to_string(seeds[i])) / "manifest.json")}});
  }
  io::write_json(plan.output_dir / "manifest.json",
                 Json{{"pipeline", "table1"}, {"plan", plan.to_json()}, {"seeds", seeds_json}});
  return summary;
}

TauAblationResult run_tau_ablation(const ExperimentPlan& plan, std::span<const double> taus) {
  if (taus.empty()) throw ConfigError("run_tau_ablation: no tau values");
  TauAblationResult result;
  result.base = prepare_base(plan);
  if (writing(plan)) write_base(plan, result.base);
  std::vector<ArmSpec> specs = {{"saturate", DataSource::kSaturatedPlain, plan.tau}};
  for (double tau : taus) {
    specs.push_back({"tau_" + format_double(tau), DataSource::kPrefixConditioned, tau});
  }
  for (const auto& spec : specs) {
    const auto prompts = prompts_for(result.base, spec, plan);
    result.arms.push_back(run_arm(plan, result.base, spec, prompts, result.base.pretrain.policy,
                                  ArmRun{0, plan.grpo.total_steps, plan.seed}));
    if (writing(plan)) write_arm(plan.output_dir / "arms" / spec.name, result.arms.back());
  }
  if (writing(plan)) {
    std::ostringstream curves;
    curves << "arm,tau,step,eval_pass_at_1,train_pass_at_1\n";
    std::ostringstream peaks;
    peaks << "arm,tau,dataset_size,peak_step,peak_eval_pass_at_1\n";
    for (const auto& a : result.arms) {
      const std::string tau =
          a.spec.source == DataSource::kPrefixConditioned ? format_double(a.spec.tau) : "";
      for (const auto& p : a.curve) {
        curves << a.spec.name << ',' << tau << ',' << p.step << ','
               << format_double(p.eval_pass_at_1) << ',' << format_double(p.train_pass_at_1)
               << '\n';
      }
      peaks << a.spec.name << ',' << tau << ',' << a.dataset_size << ',' << a.peak_step << ','
            << format_double(a.peak) << '\n';
    }
    io::write_text(plan.output_dir / "tau_curves.csv", curves.str());
    io::write_text(plan.output_dir / "tau_peaks.csv", peaks.str());
    Json arms = Json::array();
    for (const auto& a : result.arms) arms.push_back(arm_manifest(a));
    io::write_json(plan.output_dir / "manifest.json",
                   Json{{"pipeline", "tau"},
                        {"plan", plan.to_json()},
                        {"taus", std::vector<double>(taus.begin(), taus.end())},
                        {"base", base_manifest(plan, result.base)},
                        {"arms", std::move(arms)}});
  }
  return result;
}

RefreshResult run_refresh(const ExperimentPlan& plan, std::optional<int> fork_step) {
  RefreshResult result;
  result.base = prepare_base(plan);
  if (writing(plan)) write_base(plan, result.base);
  const ArmSpec first{"iteration1", DataSource::kPrefixConditioned, plan.tau};
  const auto prompts = prompts_for(result.base, first, plan);
  result.iteration1 = run_arm(plan, result.base, first, prompts, result.base.pretrain.policy,
                              ArmRun{0, plan.grpo.total_steps, plan.seed});
  const auto& curve = result.iteration1.curve;
  if (curve.size() < 2) throw ConfigError("refresh: need at least two evaluation steps");

  if (fork_step) {
    if (!result.iteration1.checkpoints.contains(*fork_step) ||
        *fork_step >= plan.grpo.total_steps) {
      throw ConfigError("refresh: fork step " + std::to_string(*fork_step) +
                        " is not an evaluation step before the last");
    }
    result.fork_step = *fork_step;
  } else {
    double best = -1.0;
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
      if (curve[i].eval_pass_at_1 > best) {
        best = curve[i].eval_pass_at_1;
        result.fork_step = curve[i].step;
      }
    }
  }
  const Policy& fork = result.iteration1.checkpoints.at(result.fork_step);
  result.iteration1_hash = io::policy_hash(fork);

  Policy start = fork;
  if (writing(plan)) {
    write_arm(plan.output_dir / "arms" / first.name, result.iteration1);
    start = io::read_policy(plan.output_dir / "arms" / first.name /
                            io::checkpoint_name(result.fork_step));
  }
  result.fork_hash = io::policy_hash(start);
  if (result.fork_hash != result.iteration1_hash) {
    throw ContractViolation("refresh: fork checkpoint differs from iteration 1 at the fork step");
  }

  std::vector<Question> questions;
  for (const auto& r : result.base.prefix_dataset.records) questions.push_back(r.question);
  result.refreshed = refresh_dataset(start, result.base.graph, questions,
                                     sweep_config(plan, plan.tau), plan.max_attempts);
  for (const auto& p : curve) {
    if (p.step > result.fork_step) result.prolonged_peak = std::max(result.prolonged_peak, p.eval_pass_at_1);
  }
  if (!result.refreshed.warning_empty) {
    const ArmSpec second{"iteration2", DataSource::kRefreshed, plan.tau};
    const auto refreshed_prompts =
        to_prompts(std::span<const ConditionedRecord>(result.refreshed.records));
    result.iteration2 = run_arm(
        plan, result.base, second, refreshed_prompts, start,
        ArmRun{result.fork_step, plan.grpo.total_steps - result.fork_step,
               derive_seed(plan.seed, Phase::kTrain, kIteration2Tag)});
    for (const auto& p : result.iteration2->curve) {
      if (p.step > result.fork_step) {
        result.refreshed_peak = std::max(result.refreshed_peak, p.eval_pass_at_1);
      }
    }
  }

  if (writing(plan)) {
    io::write_dataset(plan.output_dir / "refresh" / "dataset.jsonl", result.refreshed.records);
    io::write_sweeps(plan.output_dir / "refresh" / "sweeps.jsonl", result.refreshed.selections);
    io::write_diagnostics(plan.output_dir / "refresh", result.refreshed.diagnostics);
    if (result.iteration2) write_arm(plan.output_dir / "arms" / "iteration2", *result.iteration2);
    std::ostringstream curves;
    curves << "arm,step,eval_pass_at_1,train_pass_at_1\n";
    auto add = [&](const ArmResult& a) {
      for (const auto& p : a.curve) {
        curves << a.spec.name << ',' << p.step << ',' << format_double(p.eval_pass_at_1) << ','
               << format_double(p.train_pass_at_1) << '\n';
      }
    };
    add(result.iteration1);
    if (result.iteration2) add(*result.iteration2);
    io::write_text(plan.output_dir / "refresh_curves.csv", curves.str());
    Json arms = Json::array();
    arms.push_back(arm_manifest(result.iteration1));
    if (result.iteration2) arms.push_back(arm_manifest(*result.iteration2));
    io::write_json(
        plan.output_dir / "manifest.json",
        Json{{"pipeline", "refresh"},
             {"plan", plan.to_json()},
             {"base", base_manifest(plan, result.base)},
             {"fork_step", result.fork_step},
             {"fork_hash", result.fork_hash},
             {"iteration1_hash_at_fork", result.iteration1_hash},
             {"refreshed_records", result.refreshed.records.size()},
             {"refreshed_excluded", result.refreshed.excluded_question_ids},
             {"refreshed_empty", result.refreshed.warning_empty},
             {"prolonged_peak", result.prolonged_peak},
             {"refreshed_peak", result.refreshed_peak},
             {"arms", std::move(arms)}});
  }
  return result;
}

}  // namespace fpc
