#pragma once

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "psx/datasets/example.hpp"
#include "psx/datasets/io.hpp"
#include "psx/datasets/pointerize.hpp"
#include "psx/datasets/synthetic.hpp"
#include "psx/datasets/vocabulary.hpp"
#include "psx/numcore/checkpoint.hpp"
#include "psx/numcore/graph.hpp"
#include "psx/pointer_head/model.hpp"
#include "psx/seq2seq/config.hpp"
#include "psx/training/config.hpp"
#include "psx/training/evaluate.hpp"
#include "psx/training/model_check.hpp"
#include "psx/training/trainer.hpp"

namespace psx::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kConsistency = 3, kNumerical = 4 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;
using nlohmann::json;

/// Dataset directory layout shared by gen-data, pointerize and train.
struct DataDir {
  fs::path root;
  fs::path train() const { return root / "train.jsonl"; }
  fs::path dev() const { return root / "dev.jsonl"; }
  fs::path test() const { return root / "test.jsonl"; }
  fs::path stats() const { return root / "stats.json"; }
  fs::path source_vocab() const { return root / "source.vocab"; }
  fs::path target_vocab() const { return root / "target.vocab"; }
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::ios_base::failure("cannot create directory '" + dir.string() + "'");
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto f = open_output(path.string());
  f << text;
  if (!f) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
  auto f = open_input(path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

/// PSX_THREADS caps concurrency of read-only evaluation; defaults to 1.
inline std::size_t thread_cap() {
  const char* v = std::getenv("PSX_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string("PSX_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

inline void print_metrics(std::ostream& out, const Metrics& m, bool pretty) {
  if (pretty) {
    out << std::left << std::setw(18) << "examples" << m.examples << '\n'
        << std::setw(18) << "steps" << m.steps << '\n'
        << std::setw(18) << "error_rate" << m.error_rate << '\n'
        << std::setw(18) << "token_accuracy" << m.token_accuracy << '\n'
        << std::setw(18) << "mean_nll" << m.mean_nll << '\n'
        << std::setw(18) << "pointer_usage" << m.pointer_usage << '\n'
        << std::setw(18) << "switch_accuracy" << m.switch_accuracy << '\n';
    return;
  }
  out << json{{"examples", m.examples},
              {"steps", m.steps},
              {"error_rate", m.error_rate},
              {"token_accuracy", m.token_accuracy},
              {"mean_nll", m.mean_nll},
              {"pointer_usage", m.pointer_usage},
              {"switch_accuracy", m.switch_accuracy}}
             .dump()
      << '\n';
}

// ---------------------------------------------------------------- gen-data

struct GenDataOptions {
  std::string task = "rarest";
  std::string out;
  std::optional<std::size_t> vocab, len, shortlist;
  double ratio = 0.99;
  double copy_fraction = 0.5;
  std::size_t count = 10000, dev_count = 1000, test_count = 5000;
  std::uint64_t seed = 1;
};

inline int run_gen_data(const GenDataOptions& o, std::ostream& out) {
  const DataDir dir{o.out};
  json stats;
  std::vector<PointerExample> train, dev, test;
  std::vector<std::string> tokens;
  json model;
  if (o.task == "rarest") {
    SyntheticConfig c;
    c.vocab_size = o.vocab.value_or(600);
    c.seq_len = o.len.value_or(7);
    if (o.shortlist) {
      c.shortlist_size = *o.shortlist;
    } else {
      c.shortlist_size = c.vocab_size * 9 / 10;
    }
    c.rare_cutoff = c.vocab_size - std::min(c.shortlist_size, c.vocab_size);
    c.geometric_ratio = o.ratio;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    auto make = [&](std::uint64_t salt, std::size_t n) {
      SyntheticConfig s = c;
      s.seed = Rng::mix(o.seed, salt);
      return RarestWordGenerator(s).take(n);
    };
    train = make(1, o.count);
    dev = make(2, o.dev_count);
    test = make(3, o.test_count);
    for (std::size_t r = 0; r < c.vocab_size; ++r) tokens.push_back("r" + std::to_string(r));
    stats = {{"task", "rarest"},   {"vocab", c.vocab_size},      {"len", c.seq_len},
             {"shortlist", c.shortlist_size}, {"rare", c.rare_cutoff}, {"ratio", c.geometric_ratio}};
    model = {{"arch", "summary"},        {"src_vocab", c.vocab_size}, {"tgt_vocab", c.vocab_size},
             {"shortlist", c.shortlist_size}, {"baseline_shortlist", c.vocab_size}, {"src_len", c.seq_len},
             {"shared_vocab", true},      {"unk_id", 0},               {"eos_id", -1},
             {"inverse_temperature", 2.0}};
  } else if (o.task == "copy") {
    CopyTaskConfig c;
    c.vocab_size = o.vocab.value_or(200);
    c.shortlist = o.shortlist.value_or(150);
    c.seq_len = o.len.value_or(10);
    c.copy_fraction = o.copy_fraction;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    auto make = [&](std::uint64_t salt, std::size_t n) {
      CopyTaskConfig s = c;
      s.seed = Rng::mix(o.seed, salt);
      return CopyTaskGenerator(s).take(n);
    };
    train = make(1, o.count);
    dev = make(2, o.dev_count);
    test = make(3, o.test_count);
    tokens = {kUnkToken, kBosToken, kEosToken};
    for (std::size_t i = kReservedIds; i < c.vocab_size; ++i) tokens.push_back("c" + std::to_string(i));
    stats = {{"task", "copy"},      {"vocab", c.vocab_size}, {"len", c.seq_len},
             {"shortlist", c.shortlist}, {"copy_fraction", c.copy_fraction}};
    model = {{"arch", "attention"},   {"src_vocab", c.vocab_size}, {"tgt_vocab", c.vocab_size},
             {"shortlist", c.shortlist}, {"baseline_shortlist", c.shortlist}, {"src_len", 0},
             {"shared_vocab", true},   {"unk_id", kUnkId},          {"eos_id", -1},
             {"inverse_temperature", 1.0}};
  } else {
    throw UsageError("--task must be rarest or copy, got '" + o.task + "'");
  }

  std::size_t pointers = 0;
  for (const auto& ex : train) pointers += ex.pointer_count();
  stats["seed"] = o.seed;
  stats["examples"] = {{"train", train.size()}, {"dev", dev.size()}, {"test", test.size()}};
  stats["pointers"] = pointers;
  stats["pointers_per_100_examples"] = train.empty() ? 0.0 : static_cast<double>(pointers * 100) / train.size();
  stats["model"] = model;

  ensure_dir(dir.root);
  save_examples(dir.train().string(), train);
  save_examples(dir.dev().string(), dev);
  save_examples(dir.test().string(), test);
  const auto vocab = Vocabulary::from_tokens(tokens);
  vocab.save(dir.source_vocab().string());
  vocab.save(dir.target_vocab().string());
  write_text(dir.stats(), stats.dump(2) + "\n");
  out << stats.dump() << '\n';
  return kOk;
}

// -------------------------------------------------------------- pointerize

struct PointerizeOptions {
  std::string mode;
  std::size_t min_count = 5;
  std::size_t shortlist = 0;
  std::string dict;
  std::string input;
  std::string out;
};

inline int run_pointerize(const PointerizeOptions& o, std::ostream& out, std::ostream& err) {
  if (o.mode != "unk" && o.mode != "entity" && o.mode != "mt") {
    throw UsageError("--mode must be unk, entity or mt, got '" + o.mode + "'");
  }
  if (o.mode == "mt" && o.dict.empty()) throw UsageError("--dict is required with --mode mt");
  if (o.min_count < 1) throw UsageError("--min-count must be >= 1");

  auto in = open_input(o.input);
  PointerizedCorpus pc;
  if (o.mode == "entity") {
    try {
      pc = pointerize_entities(read_tagged_pairs(in), o.min_count);
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
  } else if (o.mode == "unk") {
    pc = pointerize_unk(read_text_pairs(in), o.min_count);
  } else {
    auto df = open_input(o.dict);
    pc = pointerize_mt(read_text_pairs(in), read_dictionary(df), o.min_count, o.shortlist);
  }
  if (pc.stats.skipped) err << "warning: skipped " << pc.stats.skipped << " malformed pair(s)\n";

  const DataDir dir{o.out};
  ensure_dir(dir.root);
  save_examples(dir.train().string(), pc.examples);
  pc.source_vocab.save(dir.source_vocab().string());
  pc.target_vocab.save(dir.target_vocab().string());
  json stats = stats_to_json(pc.stats);
  stats["mode"] = o.mode;
  stats["min_count"] = o.min_count;
  std::size_t src_len = 0;
  for (const auto& ex : pc.examples) src_len = std::max(src_len, ex.source.size());
  stats["model"] = {{"arch", "attention"},
                    {"src_vocab", pc.source_vocab.size()},
                    {"tgt_vocab", pc.target_vocab.size()},
                    {"shortlist", pc.target_vocab.shortlist_size()},
                    {"baseline_shortlist", pc.target_vocab.shortlist_size()},
                    {"src_len", 0},
                    {"shared_vocab", false},
                    {"unk_id", Vocabulary::unk()},
                    {"eos_id", Vocabulary::eos()},
                    {"inverse_temperature", 1.0}};
  write_text(dir.stats(), stats.dump(2) + "\n");
  out << stats.dump() << '\n';
  return kOk;
}

// ------------------------------------------------------------------- model

struct ModelOptions {
  std::optional<std::string> arch, head, switch_act;
  std::optional<std::size_t> src_vocab, tgt_vocab, shortlist, src_len;
  std::size_t embed = 128, hidden = 128, switch_hidden = 128;
};

/// Model defaults come from the dataset's stats.json; flags override them.
inline ModelConfig resolve_model(const ModelOptions& o, const json& hints, const TrainConfig& tc) {
  ModelConfig c;
  auto hint = [&](const char* key) -> const json* {
    if (!hints.contains(key)) return nullptr;
    return &hints.at(key);
  };
  const std::string arch = o.arch.value_or(hint("arch") ? hint("arch")->get<std::string>() : "attention");
  if (arch != "attention" && arch != "summary") throw UsageError("--arch must be attention or summary");
  c.arch = arch == "summary" ? Arch::summary : Arch::attention;
  const std::string head = o.head.value_or("pointer");
  if (head != "pointer" && head != "softmax") throw UsageError("--head must be pointer or softmax");
  c.head = head == "softmax" ? Head::softmax : Head::pointer;
  const std::string act = o.switch_act.value_or("tanh");
  if (act != "tanh" && act != "relu") throw UsageError("--switch-act must be tanh or relu");
  c.switch_activation = act == "relu" ? SwitchActivation::relu : SwitchActivation::tanh_residual;

  auto size = [&](const std::optional<std::size_t>& flag, const char* key, const char* name) {
    if (flag) return *flag;
    if (const json* h = hint(key)) return h->get<std::size_t>();
    throw UsageError(std::string("--") + name + " is required (no dataset hint)");
  };
  c.src_vocab = size(o.src_vocab, "src_vocab", "src-vocab");
  c.tgt_vocab = size(o.tgt_vocab, "tgt_vocab", "tgt-vocab");
  c.shortlist = size(o.shortlist, c.head == Head::softmax ? "baseline_shortlist" : "shortlist", "shortlist");
  c.src_len = o.src_len ? *o.src_len : (hint("src_len") ? hint("src_len")->get<std::size_t>() : 0);
  c.embed = o.embed;
  c.hidden = o.hidden;
  c.switch_hidden = o.switch_hidden;
  c.inverse_temperature = tc.inverse_temperature;
  c.switch_bias_init = tc.switch_bias_init;
  if (const json* h = hint("shared_vocab")) c.shared_vocab = h->get<bool>();
  if (const json* h = hint("unk_id")) c.unk_id = h->get<int>();
  if (const json* h = hint("eos_id")) c.eos_id = h->get<int>();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

/// Rejects data whose ids or lengths the model cannot consume.
inline void check_data_fits(const ModelConfig& c, const std::vector<PointerExample>& data, const std::string& model_name,
                            const std::string& data_name) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data[i];
    auto fail = [&](const std::string& why) {
      throw ConsistencyError("model '" + model_name + "' and data '" + data_name + "' disagree at example " +
                             std::to_string(i) + ": " + why);
    };
    for (int id : ex.source) {
      if (id < 0 || static_cast<std::size_t>(id) >= c.src_vocab) fail("source id " + std::to_string(id) + " >= src_vocab");
    }
    for (int id : ex.target) {
      if (id < 0 || static_cast<std::size_t>(id) >= c.tgt_vocab) fail("target id " + std::to_string(id) + " >= tgt_vocab");
    }
    if (c.arch == Arch::summary && c.head == Head::pointer && ex.source.size() != c.src_len) {
      fail("source length " + std::to_string(ex.source.size()) + " != src_len " + std::to_string(c.src_len));
    }
  }
}

struct LoadedModel {
  PointerSoftmaxModel<float> model;
  ParamStore<float> params;
};

inline LoadedModel load_model(const std::string& path) {
  const DecodedCheckpoint ck = read_checkpoint(path);
  ModelConfig c;
  try {
    c = ModelConfig::from_meta(ck.meta);
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("checkpoint '" + path + "' has bad model metadata: " + e.what());
  } catch (const std::logic_error& e) {
    throw CheckpointError("checkpoint '" + path + "' has bad model metadata: " + e.what());
  }
  LoadedModel lm{PointerSoftmaxModel<float>(c), {}};
  lm.model.init_params(lm.params, 0);
  restore_into(ck, lm.params);
  return lm;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string out;
  std::string config;
  ModelOptions model;
  std::map<std::string, std::string> overrides;
};

inline int run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  TrainConfig tc;
  try {
    if (!o.config.empty()) tc = TrainConfig::load(o.config);
    for (const auto& [k, v] : o.overrides) tc.set(k, v);
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const DataDir dir{o.data};
  json hints = json::object();
  if (fs::exists(dir.stats())) {
    const json stats = read_json(dir.stats());
    if (stats.contains("model")) hints = stats.at("model");
  }
  // A synthetic-task default that the config file or a flag did not set.
  if (!o.overrides.count("inverse_temperature") && o.config.empty() && hints.contains("inverse_temperature")) {
    tc.inverse_temperature = hints.at("inverse_temperature").get<double>();
  }
  const ModelConfig mc = resolve_model(o.model, hints, tc);

  const auto train_data = load_examples(dir.train().string());
  if (train_data.empty()) throw ConsistencyError("training set '" + dir.train().string() + "' is empty");
  std::vector<PointerExample> dev;
  if (fs::exists(dir.dev())) dev = load_examples(dir.dev().string());
  check_data_fits(mc, train_data, "<new model>", dir.train().string());
  check_data_fits(mc, dev, "<new model>", dir.dev().string());

  PointerSoftmaxModel<float> model(mc);
  ParamStore<float> params;
  model.init_params(params, tc.seed);
  EpochStream stream(train_data, Rng::mix(tc.seed, 7));
  const auto result = train(
      model, params, [&] { return stream(); }, dev, tc,
      [&](const CurvePoint& p) {
        err << "update " << p.updates << " train_nll " << p.train_nll << " dev_nll " << p.dev_nll << " dev_error "
            << p.dev_metric << '\n';
      },
      thread_cap());

  const fs::path run{o.out};
  ensure_dir(run);
  save_checkpoint((run / "model.ckpt").string(), result.best, mc.to_meta());
  write_text(run / "curves.csv", result.curves.to_csv());
  json records = json::array();
  for (const auto& p : result.curves.points) {
    records.push_back({{"updates", p.updates}, {"train_nll", p.train_nll}, {"dev_nll", p.dev_nll},
                       {"dev_metric", p.dev_metric}});
  }
  write_text(run / "curves.json", records.dump(2) + "\n");
  out << json{{"updates", result.updates},
              {"early_stopped", result.early_stopped},
              {"best_dev_nll", std::isfinite(result.best_dev_nll) ? json(result.best_dev_nll) : json(nullptr)},
              {"checkpoint", (run / "model.ckpt").string()}}
             .dump()
      << '\n';
  return kOk;
}

// -------------------------------------------------------------------- eval

inline int run_eval(const std::string& checkpoint, const std::string& data, bool pretty, std::ostream& out) {
  const LoadedModel lm = load_model(checkpoint);
  const auto examples = load_examples(data);
  check_data_fits(lm.model.config(), examples, checkpoint, data);
  const Metrics m = evaluate(lm.model, lm.params, examples, 256, thread_cap());
  print_metrics(out, m, pretty);
  return kOk;
}

// ------------------------------------------------------------------ decode

struct DecodeOptions {
  std::string checkpoint;
  std::string source_vocab;
  std::string target_vocab;
  std::string input;
  std::size_t max_len = 50;
};

/// One JSON object per decoded token, tagged with the index of its input line.
inline int run_decode(const DecodeOptions& o, std::istream& stdin_stream, std::ostream& out) {
  const LoadedModel lm = load_model(o.checkpoint);
  const auto& mc = lm.model.config();
  const Vocabulary sv = Vocabulary::load(o.source_vocab);
  const Vocabulary tv = Vocabulary::load(o.target_vocab);
  if (sv.size() != mc.src_vocab || tv.size() != mc.tgt_vocab) {
    throw ConsistencyError("checkpoint '" + o.checkpoint + "' expects vocabularies of " + std::to_string(mc.src_vocab) +
                           "/" + std::to_string(mc.tgt_vocab) + " tokens but '" + o.source_vocab + "'/'" +
                           o.target_vocab + "' hold " + std::to_string(sv.size()) + "/" + std::to_string(tv.size()));
  }
  std::ifstream file;
  if (!o.input.empty() && o.input != "-") file = open_input(o.input);
  std::istream& in = o.input.empty() || o.input == "-" ? stdin_stream : file;

  std::string line;
  std::size_t sentence = 0;
  while (std::getline(in, line)) {
    const auto toks = split_tokens(line);
    if (toks.empty()) {
      ++sentence;
      continue;
    }
    std::vector<int> ids;
    try {
      ids = sv.encode(toks);
    } catch (const std::out_of_range& e) {
      throw ConsistencyError("line " + std::to_string(sentence + 1) + ": " + e.what());
    }
    if (mc.arch == Arch::summary && mc.head == Head::pointer && ids.size() != mc.src_len) {
      throw ConsistencyError("line " + std::to_string(sentence + 1) + " has " + std::to_string(ids.size()) +
                             " tokens; checkpoint '" + o.checkpoint + "' needs " + std::to_string(mc.src_len));
    }
    const std::vector<std::vector<int>> src{ids};
    const auto decoded = lm.model.greedy_decode(lm.params, src, o.max_len);
    for (const auto& tok : decoded.front()) {
      json j{{"sentence", sentence}};
      if (tok.kind == DecodedToken::Kind::word) {
        j["kind"] = "word";
        j["value"] = tv.token(tok.value);
        j["source_pos"] = nullptr;
      } else {
        j["kind"] = "copy";
        j["value"] = toks[static_cast<std::size_t>(tok.source_pos)];
        j["source_pos"] = tok.source_pos;
      }
      out << j.dump() << '\n';
    }
    ++sentence;
  }
  return kOk;
}

// --------------------------------------------------------------- gradcheck

struct GradCheckOptions {
  std::string arch = "attention";
  std::string head = "pointer";
  std::size_t hidden = 6, vocab = 8, src_len = 5, tgt_len = 3;
  std::optional<std::size_t> shortlist;
  double tol = 1e-4;
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
};

inline int run_gradcheck(const GradCheckOptions& o, std::ostream& out) {
  ModelOptions mo;
  mo.arch = o.arch;
  mo.head = o.head;
  mo.src_vocab = o.vocab;
  mo.tgt_vocab = o.vocab;
  mo.shortlist = o.shortlist.value_or(o.vocab);
  mo.src_len = o.src_len;
  mo.embed = o.hidden;
  mo.hidden = o.hidden;
  mo.switch_hidden = o.hidden;
  TrainConfig tc;
  tc.inverse_temperature = 1.0;
  ModelConfig mc = resolve_model(mo, json::object(), tc);
  mc.init_scale = 0.5;
  if (o.src_len == 0 || o.tgt_len == 0) throw UsageError("--src-len and --tgt-len must be positive");
  bool ok = true;
  for (std::size_t k = 0; k < o.seeds; ++k) {
    const auto report = check_model_gradients(mc, o.seed + k, o.src_len, o.tgt_len, o.tol);
    out << "seed " << o.seed + k << (report.passed() ? " ok" : " FAIL") << " worst " << report.worst() << '\n'
        << report.summary();
    ok = ok && report.passed();
  }
  return ok ? kOk : kNumerical;
}

// ------------------------------------------------------------------ curves

inline int run_curves(const std::string& run, const std::string& out_path, std::ostream& out) {
  const json records = read_json(fs::path(run) / "curves.json");
  Curves curves;
  try {
    for (const auto& r : records) {
      curves.append({r.at("updates").get<std::size_t>(), r.at("train_nll").get<double>(),
                     r.at("dev_nll").get<double>(), r.at("dev_metric").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("curves.json: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ConsistencyError(std::string("curves.json: ") + e.what());
  }
  if (out_path.empty() || out_path == "-") {
    out << curves.to_csv();
  } else {
    write_text(out_path, curves.to_csv());
  }
  return kOk;
}

// -------------------------------------------------------------------- main

/// Parses arguments and runs one command. Results go to `out`, diagnostics to
/// `err`. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pointer softmax toolkit"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  gen_cmd->add_option("--task", gen.task, "rarest or copy")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary size (600 rarest, 200 copy)");
  gen_cmd->add_option("--len", gen.len, "Sequence length (7 rarest, 10 copy)");
  gen_cmd->add_option("--shortlist", gen.shortlist, "Shortlist size (540 rarest, 150 copy)");
  gen_cmd->add_option("--ratio", gen.ratio, "Geometric ratio of the rank distribution")->capture_default_str();
  gen_cmd->add_option("--copy-fraction", gen.copy_fraction, "Fraction of copied positions")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Training examples")->capture_default_str();
  gen_cmd->add_option("--dev-count", gen.dev_count, "Development examples")->capture_default_str();
  gen_cmd->add_option("--test-count", gen.test_count, "Test examples")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Seed")->capture_default_str();

  PointerizeOptions ptz;
  auto* ptz_cmd = app.add_subcommand("pointerize", "Annotate a corpus with pointer supervision");
  ptz_cmd->add_option("--mode", ptz.mode, "unk, entity or mt")->required();
  ptz_cmd->add_option("--min-count", ptz.min_count, "Words seen fewer times become UNK")->capture_default_str();
  ptz_cmd->add_option("--shortlist", ptz.shortlist, "Target shortlist cap for mt (0 = none)")->capture_default_str();
  ptz_cmd->add_option("--dict", ptz.dict, "Dictionary TSV (mt mode)");
  ptz_cmd->add_option("--input", ptz.input, "Input corpus")->required();
  ptz_cmd->add_option("--out", ptz.out, "Output directory")->required();
  std::uint64_t ptz_seed = 1;
  ptz_cmd->add_option("--seed", ptz_seed, "Seed (unused; pointerization is deterministic)");

  TrainOptions tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a model on a dataset directory");
  tr_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  tr_cmd->add_option("--out", tr.out, "Run directory")->required();
  tr_cmd->add_option("--config", tr.config, "key=value training config file");
  tr_cmd->add_option("--arch", tr.model.arch, "attention or summary");
  tr_cmd->add_option("--head", tr.model.head, "pointer or softmax");
  tr_cmd->add_option("--switch-act", tr.model.switch_act, "tanh or relu");
  tr_cmd->add_option("--src-vocab", tr.model.src_vocab, "Source vocabulary size");
  tr_cmd->add_option("--tgt-vocab", tr.model.tgt_vocab, "Target vocabulary size");
  tr_cmd->add_option("--shortlist", tr.model.shortlist, "Output softmax size");
  tr_cmd->add_option("--src-len", tr.model.src_len, "Fixed source length (summary arch)");
  tr_cmd->add_option("--embed", tr.model.embed, "Embedding size")->capture_default_str();
  tr_cmd->add_option("--hidden", tr.model.hidden, "Hidden size")->capture_default_str();
  tr_cmd->add_option("--switch-hidden", tr.model.switch_hidden, "Switch MLP width")->capture_default_str();
  const std::vector<std::string> train_keys = {"optimizer",     "learning_rate",       "batch_size",
                                               "max_grad_norm", "inverse_temperature", "switch_bias_init",
                                               "early_stop_patience", "eval_every",   "max_updates",
                                               "adadelta_rho",  "adadelta_eps",        "seed"};
  std::map<std::string, std::string> raw;
  for (const auto& key : train_keys) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    tr_cmd->add_option_function<std::string>(
        flag, [&raw, key](const std::string& v) { raw[key] = v; }, "Overrides " + key);
  }

  std::string ev_ckpt, ev_data;
  bool ev_pretty = false;
  auto* ev_cmd = app.add_subcommand("eval", "Print metrics of a checkpoint on a dataset");
  ev_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev_cmd->add_option("--data", ev_data, "Dataset JSONL")->required();
  ev_cmd->add_flag("--pretty", ev_pretty, "Human-readable table");

  DecodeOptions dec;
  auto* dec_cmd = app.add_subcommand("decode", "Greedy-decode source lines");
  dec_cmd->add_option("--checkpoint", dec.checkpoint, "Checkpoint file")->required();
  dec_cmd->add_option("--source-vocab", dec.source_vocab, "Source vocabulary")->required();
  dec_cmd->add_option("--target-vocab", dec.target_vocab, "Target vocabulary")->required();
  dec_cmd->add_option("--input", dec.input, "Source lines (default stdin)");
  dec_cmd->add_option("--max-len", dec.max_len, "Maximum output length")->capture_default_str();

  GradCheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a tiny random model");
  gc_cmd->add_option("--arch", gc.arch, "attention or summary")->capture_default_str();
  gc_cmd->add_option("--head", gc.head, "pointer or softmax")->capture_default_str();
  gc_cmd->add_option("--hidden", gc.hidden, "Hidden size")->capture_default_str();
  gc_cmd->add_option("--vocab", gc.vocab, "Vocabulary size")->capture_default_str();
  gc_cmd->add_option("--shortlist", gc.shortlist, "Shortlist size (default vocab)");
  gc_cmd->add_option("--src-len", gc.src_len, "Source length")->capture_default_str();
  gc_cmd->add_option("--tgt-len", gc.tgt_len, "Target length")->capture_default_str();
  gc_cmd->add_option("--tol", gc.tol, "Relative tolerance")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "First seed")->capture_default_str();
  gc_cmd->add_option("--seeds", gc.seeds, "Number of seeds")->capture_default_str();

  std::string cv_run, cv_out;
  auto* cv_cmd = app.add_subcommand("curves", "Export the curves of a run directory as CSV");
  cv_cmd->add_option("--run", cv_run, "Run directory")->required();
  cv_cmd->add_option("--out", cv_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << e.what() << '\n';
      return kOk;
    }
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen, out);
    if (*ptz_cmd) return run_pointerize(ptz, out, err);
    if (*tr_cmd) {
      tr.overrides = raw;
      return run_train(tr, out, err);
    }
    if (*ev_cmd) return run_eval(ev_ckpt, ev_data, ev_pretty, out);
    if (*dec_cmd) return run_decode(dec, in, out);
    if (*gc_cmd) return run_gradcheck(gc, out);
    if (*cv_cmd) return run_curves(cv_run, cv_out, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConsistencyError& e) {
    err << "consistency error: " << e.what() << '\n';
    return kConsistency;
  } catch (const CheckpointError& e) {
    err << "consistency error: " << e.what() << '\n';
    return kConsistency;
  } catch (const TrainingAborted& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << '\n';
    return kIo;
  } catch (const std::ios_base::failure& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace psx::cli
