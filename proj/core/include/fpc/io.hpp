#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpc/conditioning.hpp"
#include "fpc/env.hpp"
#include "fpc/eval.hpp"
#include "fpc/grpo.hpp"
#include "fpc/policy.hpp"

namespace fpc::io {

// Insertion-ordered so that every document is written in a fixed key order.
using Json = nlohmann::ordered_json;

// All readers throw ConfigError for a missing or malformed file. Writers
// create parent directories and throw ConfigError when a file cannot be
// written. STOP is written as -1 wherever tokens appear.

Json to_json(const WorldGraph& graph);
WorldGraph world_from_json(const Json& doc);
void write_world(const std::filesystem::path& path, const WorldGraph& graph);
WorldGraph read_world(const std::filesystem::path& path);

void write_questions(const std::filesystem::path& path, std::span<const Question> questions);
std::vector<Question> read_questions(const std::filesystem::path& path);

Json to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const Json& doc);

void write_scans(const std::filesystem::path& path, std::span<const SaturationScan> scans);
std::vector<SaturationScan> read_scans(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& path,
                   std::span<const ConditionedRecord> records);
std::vector<ConditionedRecord> read_dataset(const std::filesystem::path& path);

// One line per question: the candidate lengths, fractions and accuracies.
void write_sweeps(const std::filesystem::path& path, std::span<const Selection> selections);

// fraction_histogram.csv and accuracy_histogram.csv under `dir`.
void write_diagnostics(const std::filesystem::path& dir, const DatasetDiagnostics& diagnostics);

// Binary checkpoint: magic, format version, shape, graph seed, temperature,
// then the logits as little-endian doubles. Round-trips bit-exactly.
void write_policy(const std::filesystem::path& path, const Policy& policy);
Policy read_policy(const std::filesystem::path& path);
std::string checkpoint_name(int step);

// 64-bit FNV-1a over the checkpoint bytes, as 16 hex digits.
std::string policy_hash(const Policy& policy);
std::string file_hash(const std::filesystem::path& path);

void write_metrics(const std::filesystem::path& path, std::span<const MetricRow> rows);

Json to_json(const EvalReport& report);
// `stem`.json with the summary and `stem`.csv with (question_id, n, c).
void write_eval_report(const std::filesystem::path& dir, const std::string& stem,
                       const EvalReport& report);

// (mode, fraction, mean_accuracy, n_questions); the fraction-0 row carries
// the empty-prefix baseline.
void write_recovery_curves(const std::filesystem::path& path,
                           std::span<const RecoveryCurve> curves);

void write_json(const std::filesystem::path& path, const Json& doc);
Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fpc::io
