#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpc/band.hpp"
#include "fpc/conditioning.hpp"
#include "fpc/env.hpp"
#include "fpc/error.hpp"
#include "fpc/eval.hpp"
#include "fpc/experiment.hpp"
#include "fpc/format.hpp"
#include "fpc/grpo.hpp"
#include "fpc/io.hpp"
#include "fpc/policy.hpp"
#include "fpc/rng.hpp"

namespace fs = std::filesystem;
using fpc::io::Json;

namespace {

// Every value that any subcommand can take. Defaults are the experiment
// defaults so that the standalone subcommands reproduce a pipeline run.
struct RunConfig {
  fpc::ExperimentPlan plan;
  std::string init = "goal-biased";
  std::string band = "31/32";
  std::string medium_band = "12/32:20/32";
  std::string target_band = "31/32";
  std::vector<double> recovery_fractions = fpc::RecoveryConfig{}.fractions;
  std::vector<int> budgets;
  int eval_budget = 0;
  std::string mode = "both";
  int checkpoint_every = 0;
  bool record_wall_time = false;
  int seeds = 1;
  std::vector<double> taus = {0.25, 0.5, 0.75};
  int fork_step = -1;

  std::uint64_t seed = 0;
  int workers = 1;
  std::string out = "out";
  std::string config;

  std::string world;
  std::string policy;
  std::string questions;
  std::string scans;
  std::string dataset;
  std::vector<std::string> policies;
  std::vector<std::string> names;
};

struct Setting {
  std::string section;
  std::string key;
  std::function<Json()> value;
};

// Options of one subcommand, grouped by config-file section.
class Command {
 public:
  Command(CLI::App* app, std::string name) : app_(app), name_(std::move(name)) {}

  template <class T>
  CLI::Option* add(const std::string& section, const std::string& key, T& field,
                   const std::string& help) {
    auto* opt = app_->add_option("--" + key, field, help)->capture_default_str();
    opt->group(section);
    settings_.push_back({section, key, [&field] { return Json(field); }});
    return opt;
  }

  CLI::Option* add_list(const std::string& section, const std::string& key,
                        std::vector<double>& field, const std::string& help) {
    auto* opt = add(section, key, field, help);
    opt->delimiter(',');
    return opt;
  }

  CLI::Option* add_input(const std::string& key, std::string& field, const std::string& help) {
    auto* opt = app_->add_option("--" + key, field, help)->check(CLI::ExistingFile);
    opt->group("inputs");
    inputs_.push_back({key, &field});
    return opt;
  }

  CLI::App* app() const { return app_; }
  const std::string& name() const { return name_; }
  const std::vector<Setting>& settings() const { return settings_; }
  const std::vector<std::pair<std::string, std::string*>>& inputs() const { return inputs_; }

  bool has(const std::string& section, const std::string& key) const {
    for (const auto& s : settings_) {
      if (s.key == key && (section.empty() || s.section == section)) return true;
    }
    return false;
  }

 private:
  CLI::App* app_;
  std::string name_;
  std::vector<Setting> settings_;
  std::vector<std::pair<std::string, std::string*>> inputs_;
};

void add_run(Command& c, RunConfig& cfg, bool sampling) {
  auto* app = c.app();
  if (sampling) c.add("run", "seed", cfg.seed, "run seed (required)");
  // Not echoed into the manifest: neither changes any output byte.
  app->add_option("--workers", cfg.workers, "threads for rollouts")
      ->capture_default_str()
      ->check(CLI::PositiveNumber)
      ->group("run");
  app->add_option("--out", cfg.out, "output directory")->capture_default_str()->group("run");
  app->add_option("--config", cfg.config, "INI file with per-module sections")
      ->check(CLI::ExistingFile)
      ->group("run");
}

void add_world(Command& c, RunConfig& cfg) {
  auto& w = cfg.plan.world;
  c.add("world", "nodes", w.node_count, "number of nodes");
  c.add("world", "degree", w.out_degree, "out-degree of every node");
  c.add("world", "budget", w.budget, "step budget per episode");
  c.add("world", "eval-count", w.eval_count, "held-out questions (0: a third of all pairs)");
}

void add_base(Command& c, RunConfig& cfg) {
  auto& b = cfg.plan.base;
  c.add("policy", "init-strength", b.init_strength, "goal-biased logit strength");
  c.add("policy", "stop-penalty", b.stop_penalty, "STOP logit penalty away from the goal");
  c.add("policy", "pretrain-fraction", b.pretrain_fraction,
        "leading share of the questions used for pretraining");
  c.add("policy", "target-band", cfg.target_band, "accuracy band that counts as saturated");
  c.add("policy", "pretrain-lr", b.pretrain.learning_rate, "pretraining learning rate");
  c.add("policy", "smoothing", b.pretrain.smoothing, "label-smoothing floor");
  c.add("policy", "max-iterations", b.pretrain.max_iterations, "pretraining passes");
  c.add("policy", "scan-every", b.pretrain.scan_every, "passes between saturation scans");
  c.add("policy", "scan-rollouts", b.pretrain.scan_rollouts, "rollouts per scan question");
  c.add("policy", "target-fraction", b.pretrain.target_fraction,
        "stop once this share of questions is in the target band");
}

void add_grpo(Command& c, RunConfig& cfg) {
  auto& g = cfg.plan.grpo;
  c.add("grpo", "group-size", g.group_size, "rollouts per prompt");
  c.add("grpo", "advantage-epsilon", g.advantage_epsilon, "advantage denominator epsilon");
  c.add("grpo", "clip-low", g.clip_low, "lower clip range");
  c.add("grpo", "clip-high", g.clip_high, "upper clip range");
  c.add("grpo", "inner-iterations", g.inner_iterations, "updates per sampled batch");
  c.add("grpo", "lr", g.learning_rate, "learning rate");
  c.add("grpo", "batch-size", g.batch_size, "prompts per step");
  c.add("grpo", "steps", g.total_steps, "gradient steps");
}

void add_sweep(Command& c, RunConfig& cfg) {
  c.add("conditioning", "tau", cfg.plan.tau, "target prefix-conditioned accuracy");
  c.add_list("conditioning", "fractions", cfg.plan.fractions, "prefix fractions to sweep");
  c.add("conditioning", "sweep-rollouts", cfg.plan.sweep_rollouts,
        "rollouts per prefix candidate");
}

void add_eval(Command& c, RunConfig& cfg) {
  c.add("eval", "samples", cfg.plan.eval_samples, "samples per question");
  c.add("eval", "temperature", cfg.plan.eval_temperature, "sampling temperature");
}

void add_schedule(Command& c, RunConfig& cfg) {
  c.add("eval", "eval-interval", cfg.plan.eval_interval, "steps between evaluations");
  c.add("eval", "reference-samples", cfg.plan.recovery_reference_samples,
        "samples deciding whether a question qualifies for recovery curves");
  c.add("eval", "continuations", cfg.plan.recovery_continuations,
        "continuations per recovery prefix");
}

std::string join_sections(const std::vector<std::string>& parents) {
  std::string out;
  for (const auto& p : parents) out += (out.empty() ? "" : ".") + p;
  return out;
}

std::vector<std::string> split_list(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    std::stringstream ss(in);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
  }
  return out;
}

// Values from the config file fill options the command line left unset.
void apply_config_file(const RunConfig& cfg, const Command& cmd,
                       const std::vector<const Command*>& all) {
  if (cfg.config.empty()) return;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(cfg.config);
  } catch (const CLI::Error& e) {
    throw fpc::ConfigError("cannot read config file " + cfg.config + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    const std::string section = join_sections(item.parents);
    bool known = false;
    for (const auto* c : all) known = known || c->has(section, item.name);
    if (!known) {
      throw fpc::ConfigError("unknown config key " +
                             (section.empty() ? "" : "[" + section + "] ") + item.name);
    }
    if (!cmd.has(section, item.name)) continue;
    auto* opt = cmd.app()->get_option_no_throw("--" + item.name);
    if (opt == nullptr || opt->count() > 0) continue;
    try {
      opt->add_result(split_list(item.inputs));
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw fpc::ConfigError("config key " + item.name + ": " + e.what());
    }
  }
}

Json resolved_config(const Command& cmd) {
  Json out = Json::object();
  for (const auto& s : cmd.settings()) out[s.section][s.key] = s.value();
  return out;
}

Json input_hashes(const Command& cmd) {
  Json out = Json::object();
  for (const auto& [key, field] : cmd.inputs()) {
    if (!field->empty()) out[key] = Json{{"path", *field}, {"hash", fpc::io::file_hash(*field)}};
  }
  return out;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw fpc::ConfigError(flag + " is required");
}

// Lists every regular file under `dir` (except the manifest) with its hash,
// in path order.
Json output_hashes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  Json out = Json::object();
  for (const auto& f : files) {
    out[fs::relative(f, dir).generic_string()] = fpc::io::file_hash(f);
  }
  return out;
}

void write_manifest(const Command& cmd, const RunConfig& cfg, Json extra = Json::object()) {
  const fs::path dir = cfg.out;
  Json doc{{"command", cmd.name()},
           {"config", resolved_config(cmd)},
           {"inputs", input_hashes(cmd)}};
  if (!cfg.policies.empty()) {
    Json list = Json::array();
    for (const auto& p : cfg.policies) {
      list.push_back(Json{{"path", p}, {"hash", fpc::io::file_hash(p)}});
    }
    doc["inputs"]["policies"] = std::move(list);
  }
  for (auto& [k, v] : extra.items()) doc[k] = v;
  // Pipelines write their own manifest first; keep it inside this one.
  if (fs::exists(dir / "manifest.json")) doc["pipeline"] = fpc::io::read_json(dir / "manifest.json");
  doc["outputs"] = output_hashes(dir);
  fpc::io::write_json(dir / "manifest.json", doc);
}

fpc::AccuracyBand parse_band(const std::string& text) { return fpc::AccuracyBand::parse(text); }

void resolve(RunConfig& cfg) {
  cfg.plan.saturated_band = parse_band(cfg.band);
  cfg.plan.medium_band = parse_band(cfg.medium_band);
  cfg.plan.base.target_band = parse_band(cfg.target_band);
  cfg.plan.seed = cfg.seed;
  cfg.plan.workers = cfg.workers;
}

std::vector<fpc::Question> load_questions(const RunConfig& cfg) {
  if (!cfg.questions.empty()) return fpc::io::read_questions(cfg.questions);
  if (!cfg.dataset.empty()) {
    std::vector<fpc::Question> out;
    for (const auto& r : fpc::io::read_dataset(cfg.dataset)) out.push_back(r.question);
    return out;
  }
  throw fpc::ConfigError("--questions is required");
}

Json run_make_world(const RunConfig& cfg) {
  const auto& w = cfg.plan.world;
  const auto graph = fpc::build_graph(w.node_count, w.out_degree,
                                      fpc::derive_seed(cfg.seed, fpc::Phase::kWorld), w.budget);
  const int eval_count = w.eval_count > 0 ? w.eval_count : w.node_count * w.node_count / 3;
  const auto split =
      fpc::split_questions(graph, fpc::derive_seed(cfg.seed, fpc::Phase::kQuestions), eval_count);
  const fs::path out = cfg.out;
  fpc::io::write_world(out / "world.json", graph);
  fpc::io::write_questions(out / "questions_train.jsonl", split.train);
  fpc::io::write_questions(out / "questions_eval.jsonl", split.eval);
  return Json{{"nodes", graph.node_count},
              {"train_questions", split.train.size()},
              {"eval_questions", split.eval.size()}};
}

Json run_pretrain(const RunConfig& cfg) {
  require(cfg.world, "--world");
  const auto graph = fpc::io::read_world(cfg.world);
  const auto questions = load_questions(cfg);
  const auto& b = cfg.plan.base;
  if (b.pretrain_fraction <= 0.0 || b.pretrain_fraction > 1.0) {
    throw fpc::ConfigError("--pretrain-fraction must be in (0, 1]");
  }
  const auto take = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::floor(b.pretrain_fraction * static_cast<double>(questions.size()))));
  const std::vector<fpc::Question> used(questions.begin(),
                                        questions.begin() + std::min(take, questions.size()));
  const auto scheme = cfg.init == "uniform"
                          ? fpc::InitScheme::uniform()
                          : fpc::InitScheme::goal_biased(b.init_strength, b.stop_penalty);
  fpc::PretrainConfig pc = b.pretrain;
  pc.seed = cfg.seed;
  pc.workers = cfg.workers;
  const auto result = fpc::pretrain_to_saturation(fpc::init_policy(graph, scheme), graph, used,
                                                  b.target_band, pc);
  const fs::path out = cfg.out;
  fpc::io::write_policy(out / fpc::io::checkpoint_name(0), result.policy);
  fpc::io::write_questions(out / "pretrain_questions.jsonl", used);
  fpc::io::write_questions(out / "in_band.jsonl", result.in_band);
  return Json{{"iterations", result.iterations},
              {"reached", result.reached},
              {"in_band_fraction", result.in_band_fraction},
              {"mean_accuracy", result.mean_accuracy},
              {"policy_hash", fpc::io::policy_hash(result.policy)}};
}

Json run_scan(const RunConfig& cfg) {
  require(cfg.world, "--world");
  require(cfg.policy, "--policy");
  const auto graph = fpc::io::read_world(cfg.world);
  const auto policy = fpc::io::read_policy(cfg.policy);
  fpc::check_compatible(policy, graph);
  const auto questions = load_questions(cfg);
  const auto scans = fpc::scan_saturated(policy, graph, questions, cfg.plan.scan_rollouts,
                                         cfg.plan.saturated_band, cfg.seed, cfg.workers);
  fpc::io::write_scans(fs::path(cfg.out) / "scans.jsonl", scans);
  int in_band = 0;
  for (const auto& s : scans) in_band += s.in_band ? 1 : 0;
  if (in_band == 0) {
    throw fpc::EmptyResultError("no question in band " + cfg.plan.saturated_band.to_string());
  }
  return Json{{"questions", scans.size()}, {"in_band", in_band}};
}

Json run_build_dataset(const RunConfig& cfg) {
  require(cfg.world, "--world");
  require(cfg.policy, "--policy");
  require(cfg.scans, "--scans");
  const auto graph = fpc::io::read_world(cfg.world);
  const auto policy = fpc::io::read_policy(cfg.policy);
  fpc::check_compatible(policy, graph);
  std::vector<fpc::SaturationScan> scans;
  for (auto& s : fpc::io::read_scans(cfg.scans)) {
    if (s.in_band) scans.push_back(std::move(s));
  }
  fpc::SweepConfig sc;
  sc.tau = cfg.plan.tau;
  sc.fractions = cfg.plan.fractions;
  sc.rollouts = cfg.plan.sweep_rollouts;
  sc.run_seed = cfg.seed;
  sc.workers = cfg.workers;
  const auto dataset = fpc::build_dataset(policy, graph, scans, sc);
  const fs::path out = cfg.out;
  fpc::io::write_dataset(out / "dataset.jsonl", dataset.records);
  fpc::io::write_sweeps(out / "sweeps.jsonl", dataset.selections);
  fpc::io::write_diagnostics(out, dataset.diagnostics);
  if (dataset.records.empty()) throw fpc::EmptyResultError("conditioned dataset is empty");
  return Json{{"records", dataset.records.size()},
              {"excluded", dataset.excluded_question_ids},
              {"mean_fraction", dataset.diagnostics.mean_fraction},
              {"mean_selected_accuracy", dataset.diagnostics.mean_selected_accuracy}};
}

Json run_train(const RunConfig& cfg) {
  require(cfg.world, "--world");
  require(cfg.policy, "--policy");
  const auto graph = fpc::io::read_world(cfg.world);
  auto policy = fpc::io::read_policy(cfg.policy);
  fpc::check_compatible(policy, graph);
  std::vector<fpc::Prompt> prompts;
  if (!cfg.dataset.empty()) {
    prompts = fpc::to_prompts(fpc::io::read_dataset(cfg.dataset));
  } else {
    prompts = fpc::to_prompts(load_questions(cfg));
  }
  if (prompts.empty()) throw fpc::EmptyResultError("training set is empty");
  cfg.plan.grpo.validate();
  if (cfg.checkpoint_every < 0) throw fpc::ConfigError("--checkpoint-every must be >= 0");

  const fs::path out = cfg.out;
  fpc::TrainOptions options;
  options.run_seed = fpc::derive_seed(cfg.seed, fpc::Phase::kTrain);
  options.workers = cfg.workers;
  options.record_wall_time = cfg.record_wall_time;
  const int total = cfg.plan.grpo.total_steps;
  options.on_step = [&](int step, const fpc::Policy& p, const fpc::MetricRow&) {
    if (step == total || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)) {
      fpc::io::write_policy(out / fpc::io::checkpoint_name(step), p);
    }
  };
  const auto rows = fpc::train(policy, graph, prompts, cfg.plan.grpo, options);
  fpc::io::write_metrics(out / "metrics.csv", rows);
  return Json{{"steps", rows.size()},
              {"prompts", prompts.size()},
              {"final_mean_reward", rows.empty() ? 0.0 : rows.back().stats.mean_reward},
              {"policy_hash", fpc::io::policy_hash(policy)}};
}

Json run_evaluate(const RunConfig& cfg) {
  require(cfg.world, "--world");
  require(cfg.policy, "--policy");
  const auto graph = fpc::io::read_world(cfg.world);
  const auto policy = fpc::io::read_policy(cfg.policy);
  fpc::check_compatible(policy, graph);
  const auto questions = load_questions(cfg);
  fpc::EvalConfig ec;
  ec.samples = cfg.plan.eval_samples;
  ec.temperature = cfg.plan.eval_temperature;
  if (cfg.eval_budget > 0) ec.budget = cfg.eval_budget;
  ec.seed = cfg.seed;
  ec.workers = cfg.workers;
  const auto report = fpc::evaluate(policy, graph, questions, ec);
  const fs::path out = cfg.out;
  fpc::io::write_eval_report(out, "eval", report);
  Json summary = fpc::io::to_json(report);
  summary.erase("questions");
  summary["questions"] = report.questions.size();
  if (!cfg.budgets.empty()) {
    const auto points = fpc::budget_sweep(policy, graph, questions, cfg.budgets, ec);
    std::ostringstream text;
    text << "budget,pass_at_1\n";
    Json list = Json::array();
    for (const auto& p : points) {
      text << p.budget << ',' << fpc::format_double(p.pass_at_1) << '\n';
      list.push_back(Json{{"budget", p.budget}, {"pass_at_1", p.pass_at_1}});
    }
    fpc::io::write_text(out / "budget_sweep.csv", text.str());
    summary["budget_sweep"] = std::move(list);
  }
  return summary;
}

Json run_recovery(RunConfig& cfg) {
  require(cfg.world, "--world");
  if (cfg.policies.empty()) throw fpc::ConfigError("--policy is required");
  if (!cfg.names.empty() && cfg.names.size() != cfg.policies.size()) {
    throw fpc::ConfigError("--name must be given once per --policy");
  }
  const auto graph = fpc::io::read_world(cfg.world);
  const auto questions = load_questions(cfg);
  std::vector<fpc::Policy> policies;
  std::vector<std::string> names = cfg.names;
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    policies.push_back(fpc::io::read_policy(cfg.policies[i]));
    fpc::check_compatible(policies.back(), graph);
    if (cfg.names.empty()) names.push_back("policy" + std::to_string(i));
  }
  std::vector<fpc::PrefixMode> modes;
  if (cfg.mode == "failure" || cfg.mode == "both") modes.push_back(fpc::PrefixMode::kFailure);
  if (cfg.mode == "success" || cfg.mode == "both") modes.push_back(fpc::PrefixMode::kSuccess);

  fpc::RecoveryConfig rc;
  rc.fractions = cfg.recovery_fractions;
  rc.reference_samples = cfg.plan.recovery_reference_samples;
  rc.continuations = cfg.plan.recovery_continuations;
  rc.temperature = cfg.plan.eval_temperature;
  rc.seed = cfg.seed;
  rc.workers = cfg.workers;

  std::vector<int> shared;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto ids = fpc::qualifying_questions(policies[i], graph, questions, rc);
    if (i == 0) {
      shared = ids;
      continue;
    }
    std::vector<int> kept;
    for (int id : shared) {
      if (std::find(ids.begin(), ids.end(), id) != ids.end()) kept.push_back(id);
    }
    shared = std::move(kept);
  }
  if (shared.empty()) throw fpc::EmptyResultError("no question qualifies for every policy");

  const fs::path out = cfg.out;
  std::vector<std::vector<fpc::RecoveryCurve>> curves(policies.size());
  Json summary{{"questions", shared.size()}};
  for (std::size_t i = 0; i < policies.size(); ++i) {
    for (auto mode : modes) {
      curves[i].push_back(fpc::recovery_curve(policies[i], graph, questions, mode, rc, shared));
    }
    fpc::io::write_recovery_curves(out / (names[i] + ".csv"), curves[i]);
  }
  if (policies.size() == 2) {
    std::ostringstream text;
    text << "mode,fraction,difference,drop_" << names[0] << ",drop_" << names[1] << '\n';
    for (std::size_t m = 0; m < modes.size(); ++m) {
      for (const auto& row : fpc::recovery_gap(curves[0][m], curves[1][m])) {
        text << fpc::prefix_mode_name(modes[m]) << ',' << fpc::format_double(row.fraction) << ','
             << fpc::format_double(row.difference) << ',' << fpc::format_double(row.drop_a) << ','
             << fpc::format_double(row.drop_b) << '\n';
      }
    }
    fpc::io::write_text(out / "gap.csv", text.str());
  }
  Json baselines = Json::object();
  for (std::size_t i = 0; i < policies.size(); ++i) baselines[names[i]] = curves[i][0].baseline;
  summary["baselines"] = std::move(baselines);
  return summary;
}

Json run_refresh(const RunConfig& cfg) {
  require(cfg.world, "--world");
  require(cfg.policy, "--policy");
  const auto graph = fpc::io::read_world(cfg.world);
  const auto policy = fpc::io::read_policy(cfg.policy);
  fpc::check_compatible(policy, graph);
  const auto questions = load_questions(cfg);
  fpc::SweepConfig sc;
  sc.tau = cfg.plan.tau;
  sc.fractions = cfg.plan.fractions;
  sc.rollouts = cfg.plan.sweep_rollouts;
  sc.run_seed = cfg.seed;
  sc.workers = cfg.workers;
  const auto dataset =
      fpc::refresh_dataset(policy, graph, questions, sc, cfg.plan.max_attempts);
  const fs::path out = cfg.out;
  fpc::io::write_dataset(out / "dataset.jsonl", dataset.records);
  fpc::io::write_sweeps(out / "sweeps.jsonl", dataset.selections);
  fpc::io::write_diagnostics(out, dataset.diagnostics);
  return Json{{"records", dataset.records.size()},
              {"excluded", dataset.excluded_question_ids},
              {"warning_empty", dataset.warning_empty},
              {"mean_selected_accuracy", dataset.diagnostics.mean_selected_accuracy}};
}

Json arm_summary(const fpc::ArmResult& arm) {
  return Json{{"name", arm.spec.name},
              {"dataset_size", arm.dataset_size},
              {"delta", arm.delta},
              {"peak_step", arm.peak_step},
              {"peak", arm.peak}};
}

Json run_experiment_table1(RunConfig& cfg) {
  if (cfg.seeds < 1) throw fpc::ConfigError("--seeds must be >= 1");
  cfg.plan.output_dir = cfg.out;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.seeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  const auto summary = fpc::run_table1_seeds(cfg.plan, seeds);
  Json arms = Json::object();
  for (const auto& spec : cfg.plan.arms) {
    const auto deltas = summary.deltas(spec.name);
    const auto ms = fpc::mean_std(deltas);
    arms[spec.name] = Json{{"mean_delta", ms.mean}, {"std_delta", ms.std}};
  }
  return Json{{"seeds", seeds}, {"arms", std::move(arms)}};
}

Json run_experiment_tau(RunConfig& cfg) {
  if (cfg.taus.empty()) throw fpc::ConfigError("--taus must not be empty");
  cfg.plan.output_dir = cfg.out;
  const auto result = fpc::run_tau_ablation(cfg.plan, cfg.taus);
  Json arms = Json::array();
  for (const auto& a : result.arms) arms.push_back(arm_summary(a));
  return Json{{"arms", std::move(arms)}};
}

Json run_experiment_refresh(RunConfig& cfg) {
  cfg.plan.output_dir = cfg.out;
  std::optional<int> fork;
  if (cfg.fork_step >= 0) fork = cfg.fork_step;
  const auto result = fpc::run_refresh(cfg.plan, fork);
  return Json{{"fork_step", result.fork_step},
              {"fork_hash", result.fork_hash},
              {"refreshed_records", result.refreshed.records.size()},
              {"excluded", result.refreshed.excluded_question_ids},
              {"prolonged_peak", result.prolonged_peak},
              {"refreshed_peak", result.refreshed_peak}};
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure-prefix conditioning on a tabular path-finding world"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  RunConfig cfg;
  std::vector<std::unique_ptr<Command>> commands;
  std::map<CLI::App*, std::function<Json()>> actions;

  auto make = [&](CLI::App* parent, const std::string& name, const std::string& help) {
    commands.push_back(std::make_unique<Command>(parent->add_subcommand(name, help), name));
    return commands.back().get();
  };

  {
    auto* c = make(&app, "make-world", "build a world graph and its question split");
    add_run(*c, cfg, true);
    add_world(*c, cfg);
    actions[c->app()] = [&] { return run_make_world(cfg); };
  }
  {
    auto* c = make(&app, "pretrain", "expert-pretrain a base policy until some questions saturate");
    add_run(*c, cfg, true);
    c->add_input("world", cfg.world, "world.json");
    c->add_input("questions", cfg.questions, "questions JSONL");
    c->add("policy", "init", cfg.init, "initial policy: uniform or goal-biased")
        ->check(CLI::IsMember({"uniform", "goal-biased"}));
    add_base(*c, cfg);
    actions[c->app()] = [&] { return run_pretrain(cfg); };
  }
  {
    auto* c = make(&app, "scan", "estimate per-question accuracy and keep one failure per in-band question");
    add_run(*c, cfg, true);
    c->add_input("world", cfg.world, "world.json");
    c->add_input("policy", cfg.policy, "policy checkpoint");
    c->add_input("questions", cfg.questions, "questions JSONL");
    c->add("conditioning", "band", cfg.band, "accuracy band, e.g. 31/32 or 12/32:20/32");
    c->add("conditioning", "n", cfg.plan.scan_rollouts, "rollouts per question");
    actions[c->app()] = [&] { return run_scan(cfg); };
  }
  {
    auto* c = make(&app, "build-dataset", "build the failure-prefix dataset from saturated scans");
    add_run(*c, cfg, true);
    c->add_input("world", cfg.world, "world.json");
    c->add_input("policy", cfg.policy, "policy checkpoint");
    c->add_input("scans", cfg.scans, "scans JSONL");
    add_sweep(*c, cfg);
    actions[c->app()] = [&] { return run_build_dataset(cfg); };
  }
  {
    auto* c = make(&app, "train", "GRPO on plain questions or a conditioned dataset");
    add_run(*c, cfg, true);
    c->add_input("world", cfg.world, "world.json");
    c->add_input("policy", cfg.policy, "starting checkpoint");
    auto* q = c->add_input("questions", cfg.questions, "plain questions JSONL");
    c->add_input("dataset", cfg.dataset, "conditioned dataset JSONL")->excludes(q);
    add_grpo(*c, cfg);
    c->add("grpo", "checkpoint-every", cfg.checkpoint_every,
           "steps between checkpoints (0: final only)");
    c->add("grpo", "record-wall-time", cfg.record_wall_time,
           "write wall-clock milliseconds to metrics.csv (breaks byte-identical reruns)");
    actions[c->app()] = [&] { return run_train(cfg); };
  }
  {
    auto* c = make(&app, "evaluate", "pass@k and budget-limited accuracy");
    add_run(*c, cfg, true);
    c->add_input("world", cfg.world, "world.json");
    c->add_input("policy", cfg.policy, "policy checkpoint");
    c->add_input("questions", cfg.questions, "questions JSONL");
    add_eval(*c, cfg);
    c->add("eval", "eval-budget", cfg.eval_budget, "step budget (0: the world's)");
    c->add("eval", "budgets", cfg.budgets, "also report pass@1 at these budgets")
        ->delimiter(',');
    actions[c->app()] = [&] { return run_evaluate(cfg); };
  }
  {
    auto* c = make(&app, "recovery", "accuracy after failure or success prefixes");
    add_run(*c, cfg, true);
    c->add_input("world", cfg.world, "world.json");
    c->add_input("questions", cfg.questions, "questions JSONL");
    auto* p = c->app()
                  ->add_option("--policy", cfg.policies, "policy checkpoint (repeatable)")
                  ->check(CLI::ExistingFile)
                  ->group("inputs");
    p->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    c->app()
        ->add_option("--name", cfg.names, "label per policy (repeatable)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->group("inputs");
    c->add("eval", "mode", cfg.mode, "failure, success or both")
        ->check(CLI::IsMember({"failure", "success", "both"}));
    c->add_list("eval", "fractions", cfg.recovery_fractions, "prefix fractions");
    c->add("eval", "reference-samples", cfg.plan.recovery_reference_samples,
           "samples deciding whether a question qualifies");
    c->add("eval", "continuations", cfg.plan.recovery_continuations,
           "continuations per prefix");
    c->add("eval", "temperature", cfg.plan.eval_temperature, "sampling temperature");
    actions[c->app()] = [&] { return run_recovery(cfg); };
  }
  {
    auto* c = make(&app, "refresh", "re-harvest failures from a trained policy and rebuild the dataset");
    add_run(*c, cfg, true);
    c->add_input("world", cfg.world, "world.json");
    c->add_input("policy", cfg.policy, "trained checkpoint");
    auto* q = c->add_input("questions", cfg.questions, "questions JSONL");
    c->add_input("dataset", cfg.dataset, "previous dataset JSONL (its questions are used)")
        ->excludes(q);
    add_sweep(*c, cfg);
    c->add("conditioning", "max-attempts", cfg.plan.max_attempts,
           "rollouts tried per question before it counts as perfect");
    actions[c->app()] = [&] { return run_refresh(cfg); };
  }

  auto* experiment = app.add_subcommand("experiment", "end-to-end pipelines");
  experiment->require_subcommand(1);
  auto add_pipeline = [&](Command& c) {
    add_run(c, cfg, true);
    add_world(c, cfg);
    add_base(c, cfg);
    add_grpo(c, cfg);
    c.add("conditioning", "band", cfg.band, "saturated band");
    c.add("conditioning", "medium-band", cfg.medium_band, "medium band");
    c.add("conditioning", "n", cfg.plan.scan_rollouts, "scan rollouts per question");
    add_sweep(c, cfg);
    add_eval(c, cfg);
    add_schedule(c, cfg);
  };
  {
    auto* c = make(experiment, "table1", "saturate, medium and failure-prefix arms over seeds");
    add_pipeline(*c);
    c->add("run", "seeds", cfg.seeds, "consecutive seeds starting at --seed");
    actions[c->app()] = [&] { return run_experiment_table1(cfg); };
  }
  {
    auto* c = make(experiment, "tau", "failure-prefix arms at several target accuracies");
    add_pipeline(*c);
    c->add_list("conditioning", "taus", cfg.taus, "target accuracies");
    actions[c->app()] = [&] { return run_experiment_tau(cfg); };
  }
  {
    auto* c = make(experiment, "refresh", "prolonged training against a refreshed dataset");
    add_pipeline(*c);
    c->add("conditioning", "max-attempts", cfg.plan.max_attempts,
           "rollouts tried per question before it counts as perfect");
    c->add("run", "fork-step", cfg.fork_step, "step to fork from (-1: best before the last)");
    actions[c->app()] = [&] { return run_experiment_refresh(cfg); };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config_error", e.what());
    return static_cast<int>(fpc::ErrorKind::kConfig);
  }

  Command* active = nullptr;
  for (const auto& c : commands) {
    if (c->app()->parsed()) active = c.get();
  }
  std::vector<const Command*> all;
  for (const auto& c : commands) all.push_back(c.get());

  try {
    if (active == nullptr) throw fpc::ConfigError("no subcommand given");
    apply_config_file(cfg, *active, all);
    auto* seed_opt = active->app()->get_option_no_throw("--seed");
    if (seed_opt != nullptr && seed_opt->count() == 0) {
      throw fpc::ConfigError("--seed is required");
    }
    resolve(cfg);
    fs::create_directories(cfg.out);
    Json summary{{"command", active->name()}, {"status", "ok"}, {"out", cfg.out}};
    const Json result = actions.at(active->app())();
    write_manifest(*active, cfg);
    for (const auto& [k, v] : result.items()) summary[k] = v;
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const fpc::Error& e) {
    print_error(fpc::error_kind_name(e.kind()), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    print_error("contract_violation", e.what());
    return static_cast<int>(fpc::ErrorKind::kContract);
  }
}
