#include "fpc/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fpc/error.hpp"
#include "fpc/format.hpp"

namespace fpc::io {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kPolicyMagic[8] = {'F', 'P', 'C', 'P', 'O', 'L', 'I', 'C'};
constexpr std::uint32_t kPolicyVersion = 1;

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ConfigError("cannot read " + path.string());
  return in;
}

template <class Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      fn(Json::parse(line));
    } catch (const Json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

const char* reason_name(TerminalReason reason) {
  return reason == TerminalReason::kStopped ? "stopped" : "budget_exhausted";
}

TerminalReason parse_reason(const std::string& text) {
  if (text == "stopped") return TerminalReason::kStopped;
  if (text == "budget_exhausted") return TerminalReason::kBudgetExhausted;
  throw ConfigError("unknown terminal_reason '" + text + "'");
}

Json question_json(const Question& q) {
  return Json{{"question_id", q.question_id}, {"start", q.start}, {"goal", q.goal}};
}

Question question_from(const Json& doc) {
  return Question{doc.at("question_id").get<int>(), doc.at("start").get<int>(),
                  doc.at("goal").get<int>()};
}

std::uint64_t fnv1a(const unsigned char* data, std::size_t size, std::uint64_t h) {
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::string policy_bytes(const Policy& policy) {
  std::string bytes;
  auto put = [&](const void* p, std::size_t n) {
    bytes.append(static_cast<const char*>(p), n);
  };
  put(kPolicyMagic, sizeof kPolicyMagic);
  put(&kPolicyVersion, sizeof kPolicyVersion);
  const std::int32_t shape[2] = {policy.node_count, policy.out_degree};
  put(shape, sizeof shape);
  put(&policy.graph_seed, sizeof policy.graph_seed);
  put(&policy.temperature, sizeof policy.temperature);
  const std::uint64_t count = policy.logits.size();
  put(&count, sizeof count);
  put(policy.logits.data(), count * sizeof(double));
  return bytes;
}

}  // namespace

Json to_json(const WorldGraph& graph) {
  return Json{{"node_count", graph.node_count},
              {"out_degree", graph.out_degree},
              {"seed", graph.seed},
              {"budget", graph.budget},
              {"edges", graph.edges}};
}

WorldGraph world_from_json(const Json& doc) {
  WorldGraph g;
  try {
    g.node_count = doc.at("node_count").get<int>();
    g.out_degree = doc.at("out_degree").get<int>();
    g.seed = doc.at("seed").get<std::uint64_t>();
    g.budget = doc.at("budget").get<int>();
    g.edges = doc.at("edges").get<std::vector<std::vector<int>>>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed world document: ") + e.what());
  }
  if (g.node_count < 1 || g.out_degree < 1 || g.budget < 1 ||
      g.edges.size() != static_cast<std::size_t>(g.node_count)) {
    throw ConfigError("malformed world document: inconsistent shape");
  }
  for (const auto& row : g.edges) {
    if (row.size() != static_cast<std::size_t>(g.out_degree)) {
      throw ConfigError("malformed world document: row length differs from out_degree");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (!g.valid_node(row[i]) || (i > 0 && row[i] <= row[i - 1])) {
        throw ConfigError("malformed world document: rows must hold ascending node ids");
      }
    }
  }
  return g;
}

void write_world(const fs::path& path, const WorldGraph& graph) {
  write_json(path, to_json(graph));
}

WorldGraph read_world(const fs::path& path) { return world_from_json(read_json(path)); }

void write_questions(const fs::path& path, std::span<const Question> questions) {
  auto out = open_out(path);
  for (const auto& q : questions) out << question_json(q).dump() << '\n';
}

std::vector<Question> read_questions(const fs::path& path) {
  std::vector<Question> out;
  for_each_line(path, [&](const Json& doc) { out.push_back(question_from(doc)); });
  return out;
}

Json to_json(const Trajectory& t) {
  return Json{{"question_id", t.question_id},
              {"prefix", t.prefix},
              {"actions", t.actions},
              {"step_logprobs", t.step_logprobs},
              {"reward", t.reward},
              {"terminal_reason", reason_name(t.terminal_reason)}};
}

Trajectory trajectory_from_json(const Json& doc) {
  Trajectory t;
  t.question_id = doc.at("question_id").get<int>();
  t.prefix = doc.at("prefix").get<std::vector<Token>>();
  t.actions = doc.at("actions").get<std::vector<Token>>();
  t.step_logprobs = doc.at("step_logprobs").get<std::vector<double>>();
  t.reward = doc.at("reward").get<int>();
  t.terminal_reason = parse_reason(doc.at("terminal_reason").get<std::string>());
  return t;
}

void write_scans(const fs::path& path, std::span<const SaturationScan> scans) {
  auto out = open_out(path);
  for (const auto& s : scans) {
    Json doc = question_json(s.question);
    doc["rollouts"] = s.rollouts;
    doc["correct"] = s.correct;
    doc["accuracy"] = s.accuracy;
    doc["in_band"] = s.in_band;
    doc["failure"] = s.failure ? to_json(*s.failure) : Json(nullptr);
    out << doc.dump() << '\n';
  }
}

std::vector<SaturationScan> read_scans(const fs::path& path) {
  std::vector<SaturationScan> out;
  for_each_line(path, [&](const Json& doc) {
    SaturationScan s;
    s.question = question_from(doc);
    s.rollouts = doc.at("rollouts").get<int>();
    s.correct = doc.at("correct").get<int>();
    s.accuracy = doc.at("accuracy").get<double>();
    s.in_band = doc.at("in_band").get<bool>();
    if (!doc.at("failure").is_null()) s.failure = trajectory_from_json(doc.at("failure"));
    out.push_back(std::move(s));
  });
  return out;
}

void write_dataset(const fs::path& path, std::span<const ConditionedRecord> records) {
  auto out = open_out(path);
  for (const auto& r : records) {
    Json doc = question_json(r.question);
    doc["prefix"] = r.prefix;
    doc["fraction"] = r.fraction;
    doc["selected_accuracy"] = r.selected_accuracy;
    doc["tau"] = r.tau;
    doc["source"] = r.source;
    out << doc.dump() << '\n';
  }
}

std::vector<ConditionedRecord> read_dataset(const fs::path& path) {
  std::vector<ConditionedRecord> out;
  for_each_line(path, [&](const Json& doc) {
    ConditionedRecord r;
    r.question = question_from(doc);
    r.prefix = doc.at("prefix").get<std::vector<Token>>();
    r.fraction = doc.at("fraction").get<double>();
    r.selected_accuracy = doc.at("selected_accuracy").get<double>();
    r.tau = doc.at("tau").get<double>();
    r.source = doc.at("source").get<std::string>();
    out.push_back(std::move(r));
  });
  return out;
}

void write_sweeps(const fs::path& path, std::span<const Selection> selections) {
  auto out = open_out(path);
  for (const auto& sel : selections) {
    Json candidates = Json::array();
    for (const auto& c : sel.sweep) {
      candidates.push_back(
          Json{{"length", c.length}, {"fraction", c.fraction}, {"accuracy", c.accuracy}});
    }
    out << Json{{"question_id", sel.record.question.question_id},
                {"selected_fraction", sel.record.fraction},
                {"candidates", std::move(candidates)}}
               .dump()
        << '\n';
  }
}

void write_diagnostics(const fs::path& dir, const DatasetDiagnostics& d) {
  auto write_hist = [&](const char* name, const char* column,
                        const std::vector<HistogramBin>& bins) {
    std::ostringstream text;
    text << column << ",count\n";
    for (const auto& b : bins) text << format_double(b.lower) << ',' << b.count << '\n';
    write_text(dir / name, text.str());
  };
  write_hist("fraction_histogram.csv", "fraction_bucket", d.fraction_histogram);
  write_hist("accuracy_histogram.csv", "accuracy_bucket", d.accuracy_histogram);
}

void write_policy(const fs::path& path, const Policy& policy) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  const std::string bytes = policy_bytes(policy);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("cannot write " + path.string());
}

Policy read_policy(const fs::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  auto get = [&](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw ConfigError("truncated checkpoint " + path.string());
  };
  char magic[8];
  get(magic, sizeof magic);
  if (std::memcmp(magic, kPolicyMagic, sizeof magic) != 0) {
    throw ConfigError("not a policy checkpoint: " + path.string());
  }
  std::uint32_t version = 0;
  get(&version, sizeof version);
  if (version != kPolicyVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  Policy p;
  std::int32_t shape[2];
  get(shape, sizeof shape);
  p.node_count = shape[0];
  p.out_degree = shape[1];
  get(&p.graph_seed, sizeof p.graph_seed);
  get(&p.temperature, sizeof p.temperature);
  std::uint64_t count = 0;
  get(&count, sizeof count);
  if (p.node_count < 1 || p.out_degree < 1 ||
      count != static_cast<std::uint64_t>(p.node_count) * p.node_count * (p.out_degree + 1)) {
    throw ConfigError("checkpoint shape is inconsistent: " + path.string());
  }
  p.logits.resize(count);
  get(p.logits.data(), count * sizeof(double));
  return p;
}

std::string checkpoint_name(int step) { return "ckpt_" + std::to_string(step) + ".policy"; }

std::string policy_hash(const Policy& policy) {
  const std::string bytes = policy_bytes(policy);
  return hex64(fnv1a(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                     0xcbf29ce484222325ULL));
}

std::string file_hash(const fs::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buffer[1 << 14];
  while (in) {
    in.read(buffer, sizeof buffer);
    h = fnv1a(reinterpret_cast<const unsigned char*>(buffer),
              static_cast<std::size_t>(in.gcount()), h);
  }
  return hex64(h);
}

void write_metrics(const fs::path& path, std::span<const MetricRow> rows) {
  std::ostringstream text;
  text << "step,mean_reward,mean_abs_advantage,grad_norm,clip_fraction,wall_ms\n";
  for (const auto& r : rows) {
    text << r.step << ',' << format_double(r.stats.mean_reward) << ','
         << format_double(r.stats.mean_abs_advantage) << ','
         << format_double(r.stats.grad_norm) << ',' << format_double(r.stats.clip_fraction)
         << ',' << format_double(r.wall_ms) << '\n';
  }
  write_text(path, text.str());
}

Json to_json(const EvalReport& report) {
  Json pass = Json::object();
  for (const auto& e : report.pass_at_k) pass[std::to_string(e.k)] = e.value;
  return Json{{"questions", report.questions.size()},
              {"samples", report.questions.empty() ? 0 : report.questions.front().samples},
              {"temperature", report.temperature},
              {"budget", report.budget},
              {"pass_at_1", report.pass_at_1},
              {"pass_at_k", std::move(pass)},
              {"mean_length", report.mean_length}};
}

void write_eval_report(const fs::path& dir, const std::string& stem, const EvalReport& report) {
  write_json(dir / (stem + ".json"), to_json(report));
  std::ostringstream text;
  text << "question_id,n,c\n";
  for (const auto& q : report.questions) {
    text << q.question_id << ',' << q.samples << ',' << q.correct << '\n';
  }
  write_text(dir / (stem + ".csv"), text.str());
}

void write_recovery_curves(const fs::path& path, std::span<const RecoveryCurve> curves) {
  std::ostringstream text;
  text << "mode,fraction,mean_accuracy,n_questions\n";
  for (const auto& c : curves) {
    const char* mode = prefix_mode_name(c.mode);
    text << mode << ",0," << format_double(c.baseline) << ',' << c.question_count << '\n';
    for (const auto& p : c.points) {
      text << mode << ',' << format_double(p.fraction) << ','
           << format_double(p.mean_accuracy) << ',' << c.question_count << '\n';
    }
  }
  write_text(path, text.str());
}

void write_json(const fs::path& path, const Json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

Json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

}  // namespace fpc::io
