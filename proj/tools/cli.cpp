#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "sivae/checkpoint.hpp"
#include "sivae/corpus.hpp"
#include "sivae/error.hpp"
#include "sivae/evaluation.hpp"
#include "sivae/generation.hpp"
#include "sivae/trainer.hpp"
#include "sivae/treebank.hpp"

#ifndef SIVAE_VERSION
#define SIVAE_VERSION "0.0.0"
#endif

namespace sivae::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kSplits{"train", "valid", "test"};

// Relative inputs resolve under SIVAE_DATA_ROOT when it is set.
fs::path input_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("SIVAE_DATA_ROOT"); root && *root) return fs::path(root) / path;
  }
  return path;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p.string());
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw UsageError(what + " not found: " + p.string());
}

std::string hyphenate(std::string key) {
  for (auto& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text;
}

std::string join_ints(std::span<const int> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<int> parse_ints(std::string_view text) {
  std::vector<int> out;
  std::istringstream is{std::string(text)};
  int v;
  while (is >> v) out.push_back(v);
  return out;
}

// "<sentence ids>\t<tree ids>" per line.
std::string ids_line(const PairedExample& ex) { return join_ints(ex.sentence) + '\t' + join_ints(ex.tree); }

Dataset read_ids(const fs::path& path) {
  Dataset d;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(n) + ": expected two tab-separated fields");
    }
    d.examples.push_back({parse_ints(std::string_view(line).substr(0, tab)),
                          parse_ints(std::string_view(line).substr(tab + 1))});
  }
  return d;
}

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "file of 'key = value' lines; keys are long flag names");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory")->required();
}

json resolved_options(const CLI::App* app) {
  json j = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "version") continue;
    const auto& res = opt->results();
    std::string value;
    if (opt->count() > 0) {
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
      if (res.empty() || (opt->get_type_size() == 0 && value.empty())) value = "true";
    } else {
      value = opt->get_default_str();
    }
    j[name] = value;
  }
  return j;
}

class Manifest {
 public:
  Manifest(std::string command, const CLI::App* app, std::uint64_t seed)
      : command_(std::move(command)) {
    j_["command"] = command_;
    j_["artifact_version"] = std::string("sivae ") + SIVAE_VERSION;
    j_["seed"] = seed;
    j_["config"] = resolved_options(app);
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }

  void input(const std::string& key, const fs::path& p) { j_["inputs"][key] = p.string(); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.filename().string()); }
  json& extra() { return j_; }

  void write(const fs::path& dir) const {
    write_text(dir / (command_ + ".manifest.json"), j_.dump(2) + "\n");
  }

 private:
  std::string command_;
  json j_;
};

struct LoadedModel {
  Checkpoint checkpoint;
  Vocabulary sentence_vocab;
  Vocabulary tree_vocab;
  TrainConfig train_config;
};

LoadedModel load_model(const fs::path& checkpoint_path, const std::string& vocab_dir) {
  require_file(checkpoint_path, "checkpoint");
  const fs::path dir = vocab_dir.empty() ? checkpoint_path.parent_path() : input_path(vocab_dir);
  require_file(dir / "vocab.sent", "sentence vocabulary");
  require_file(dir / "vocab.tree", "tree vocabulary");
  LoadedModel m{load_checkpoint(checkpoint_path), Vocabulary::load(dir / "vocab.sent"),
                Vocabulary::load(dir / "vocab.tree"), {}};
  check_vocabularies(m.checkpoint.meta, m.sentence_vocab, m.tree_vocab);
  m.train_config = TrainConfig::from_kv(m.checkpoint.meta.train_config);
  return m;
}

std::optional<std::size_t> depth_of(const TrainConfig& c) {
  if (c.template_depth > 0) return static_cast<std::size_t>(c.template_depth);
  return std::nullopt;
}

std::string model_name(Variant v) { return v == Variant::Conditional ? "SIVAE-c" : "SIVAE-i"; }

DecodeOptions decode_options(const std::string& mode, double temperature, int max_tree, int max_sent,
                             std::uint64_t seed) {
  DecodeOptions o;
  o.mode = parse_decode_mode(mode);
  o.temperature = temperature;
  o.max_tree_len = max_tree;
  o.max_sent_len = max_sent;
  o.seed = seed;
  return o;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
  Common common;
  std::string data;
  int min_count = 2;
  int template_depth = 0;
  int max_errors = 0;
  std::string name = "corpus";
};

struct SplitData {
  std::string split;
  std::vector<std::string> sentences;
  std::vector<std::string> tree_lines;
  std::vector<RawPair> full;
  std::vector<RawPair> templates;
};

int cmd_preprocess(const PreprocessArgs& a, const CLI::App* app, std::ostream& out, std::ostream& err) {
  const fs::path data = input_path(a.data);
  require_dir(data, "data directory");
  if (a.min_count < 1) throw UsageError("--min-count must be at least 1");
  if (a.template_depth < 0) throw UsageError("--template-depth must be non-negative");
  if (a.max_errors < 0) throw UsageError("--max-errors must be non-negative");

  std::vector<SplitData> splits;
  for (const auto& split : kSplits) {
    const fs::path sent = data / (split + ".sent");
    const fs::path tree = data / (split + ".tree");
    if (!fs::exists(sent) && !fs::exists(tree)) {
      if (split == "train") throw UsageError("training files not found: " + sent.string());
      continue;
    }
    require_file(sent, "sentence file");
    require_file(tree, "tree file");
    splits.push_back({split, read_lines(sent), read_lines(tree), {}, {}});
    if (splits.back().sentences.size() != splits.back().tree_lines.size()) {
      throw Error(ErrorCode::Io, split + ": sentence and tree files differ in line count");
    }
  }

  const std::optional<std::size_t> depth =
      a.template_depth > 0 ? std::optional<std::size_t>(static_cast<std::size_t>(a.template_depth)) : std::nullopt;
  int errors = 0;
  for (auto& s : splits) {
    for (std::size_t i = 0; i < s.sentences.size(); ++i) {
      try {
        RawPair full = make_raw_pair(s.sentences[i], s.tree_lines[i]);
        if (depth) s.templates.push_back(make_raw_pair(s.sentences[i], s.tree_lines[i], depth));
        s.full.push_back(std::move(full));
      } catch (const Error& e) {
        ++errors;
        err << s.split << ':' << (i + 1) << ": " << e.what() << '\n';
      }
    }
  }
  if (errors > a.max_errors) {
    throw Error(ErrorCode::MalformedTree, std::to_string(errors) + " malformed lines exceed the error budget of " +
                                              std::to_string(a.max_errors));
  }

  const SplitData& train = splits.front();
  std::vector<std::vector<std::string>> words, trees;
  for (const auto& r : train.full) {
    words.push_back(r.words);
    trees.push_back(r.tree);
  }
  const Vocabulary sv = build_vocab(words, a.min_count);
  const Vocabulary tv = build_vocab(trees, 1);

  const fs::path out_dir = a.common.out;
  fs::create_directories(out_dir);
  Manifest manifest("preprocess", app, a.common.seed);
  manifest.input("data", data);
  sv.save(out_dir / "vocab.sent");
  tv.save(out_dir / "vocab.tree");
  manifest.output(out_dir / "vocab.sent");
  manifest.output(out_dir / "vocab.tree");

  auto write_stream = [&](const fs::path& path, const std::vector<std::string>& lines) {
    write_lines(path, lines);
    manifest.output(path);
  };
  std::map<std::string, const SplitData*> by_name;
  for (const auto& s : splits) {
    by_name[s.split] = &s;
    std::vector<std::string> tok, tseq, ids;
    for (const auto& r : s.full) {
      std::string line;
      for (const auto& w : r.words) line += (line.empty() ? "" : " ") + w;
      tok.push_back(line);
      tseq.push_back(join_spaced(r.tree));
      ids.push_back(ids_line(numericalize(r, sv, tv)));
    }
    write_stream(out_dir / (s.split + ".tok"), tok);
    write_stream(out_dir / (s.split + ".tseq"), tseq);
    write_stream(out_dir / (s.split + ".ids"), ids);
    if (depth) {
      std::vector<std::string> tmpl, tmpl_ids;
      for (const auto& r : s.templates) {
        tmpl.push_back(join_spaced(r.tree));
        tmpl_ids.push_back(ids_line(numericalize(r, sv, tv)));
      }
      write_stream(out_dir / (s.split + ".tmpl"), tmpl);
      write_stream(out_dir / (s.split + ".tmpl.ids"), tmpl_ids);
    }
  }

  auto pairs = [&](const std::string& split) -> std::span<const RawPair> {
    const auto it = by_name.find(split);
    return it == by_name.end() ? std::span<const RawPair>{} : std::span<const RawPair>(it->second->full);
  };
  const CorpusStats stats = dataset_stats(a.name, pairs("train"), pairs("test"), pairs("valid"), sv, tv);
  const std::string table = stats_header_tsv() + "\n" + stats_row_tsv(stats) + "\n";
  write_text(out_dir / "stats.tsv", table);
  manifest.output(out_dir / "stats.tsv");
  manifest.extra()["skipped_lines"] = errors;
  manifest.extra()["template_depth"] = a.template_depth;
  manifest.write(out_dir);
  out << table;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string data;
  std::string resume;
  bool no_valid = false;
  std::map<std::string, std::string> flags;  // TrainConfig keys given as flags
};

const std::map<std::string, std::string>& train_flag_help() {
  static const std::map<std::string, std::string> help{
      {"variant", "c (conditional prior) or i (independent priors)"},
      {"setting", "standard or inputless decoding"},
      {"learning_rate", "SGD step size"},
      {"batch_size", "examples per batch"},
      {"epochs", "passes over the training split"},
      {"word_dropout", "probability of replacing a decoder input with UNK"},
      {"anneal_cap", "final KL weight"},
      {"anneal_rate", "fraction of training over which the KL weight ramps up"},
      {"clip_norm", "global gradient-norm clip"},
      {"checkpoint_every", "steps between checkpoints (0 = off)"},
      {"max_steps", "stop after this many steps (0 = no limit)"},
      {"shuffle", "shuffle examples every epoch"},
      {"embed", "embedding size"},
      {"hidden", "LSTM hidden size"},
      {"latent", "latent dimension of z_x and z_y"},
      {"prior_hidden", "hidden size of the conditional prior network"},
      {"init_scale", "uniform initialization half-width"},
      {"template_depth", "train on templates of this depth (0 = full trees)"},
      {"max_sentence_len", "skip longer training sentences"},
      {"max_tree_len", "skip longer training trees"},
  };
  return help;
}

int cmd_train(const TrainArgs& a, const CLI::App* app, std::ostream& out, std::ostream& err) {
  const fs::path data = input_path(a.data);
  require_dir(data, "data directory");
  require_file(data / "vocab.sent", "sentence vocabulary");
  require_file(data / "vocab.tree", "tree vocabulary");

  const Vocabulary sv = Vocabulary::load(data / "vocab.sent");
  const Vocabulary tv = Vocabulary::load(data / "vocab.tree");

  TrainConfig config;
  std::optional<TrainState> resume;
  if (!a.resume.empty()) {
    const fs::path ckpt = input_path(a.resume);
    require_file(ckpt, "checkpoint");
    Checkpoint c = load_checkpoint(ckpt);
    check_vocabularies(c.meta, sv, tv);
    config = TrainConfig::from_kv(c.meta.train_config);
    resume.emplace(restore_state(std::move(c)));
  }
  std::map<std::string, std::string> overrides;
  for (const auto& [key, value] : a.flags) {
    if (app->get_option("--" + hyphenate(key))->count() > 0) overrides[key] = value;
  }
  if (app->get_option("--seed")->count() > 0) overrides["seed"] = std::to_string(a.common.seed);
  try {
    config.apply_kv(overrides);
    config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const std::string suffix = config.template_depth > 0 ? ".tmpl.ids" : ".ids";
  if (config.template_depth > 0) {
    const fs::path pm = data / "preprocess.manifest.json";
    if (fs::exists(pm)) {
      std::ifstream f(pm);
      const json j = json::parse(f);
      if (j.value("template_depth", 0) != config.template_depth) {
        throw UsageError("data was preprocessed with template depth " +
                         std::to_string(j.value("template_depth", 0)) + ", not " +
                         std::to_string(config.template_depth));
      }
    }
  }
  require_file(data / ("train" + suffix), "training ids");
  const Dataset train = read_ids(data / ("train" + suffix));
  Dataset valid;
  if (!a.no_valid && fs::exists(data / ("valid" + suffix))) valid = read_ids(data / ("valid" + suffix));

  const fs::path out_dir = a.common.out;
  fs::create_directories(out_dir);
  Manifest manifest("train", app, config.seed);
  manifest.input("data", data);
  if (!a.resume.empty()) manifest.input("resume", input_path(a.resume));
  fs::copy_file(data / "vocab.sent", out_dir / "vocab.sent", fs::copy_options::overwrite_existing);
  fs::copy_file(data / "vocab.tree", out_dir / "vocab.tree", fs::copy_options::overwrite_existing);
  write_kv_file(out_dir / "config.kv", config.to_kv());

  FitOptions options;
  options.out_dir = out_dir;
  options.sentence_vocab = &sv;
  options.tree_vocab = &tv;
  options.resume = std::move(resume);
  const FitResult result = fit(train, valid, config, std::move(options));
  if (result.skipped_long > 0) err << "skipped " << result.skipped_long << " over-length training examples\n";

  json resolved = json::object();
  for (const auto& [k, v] : config.to_kv()) resolved[k] = v;
  manifest.extra()["train_config"] = resolved;
  manifest.extra()["final_step"] = result.state.step;
  for (const char* name : {"vocab.sent", "vocab.tree", "config.kv", "train.log.jsonl", "final.ckpt"}) {
    manifest.output(out_dir / name);
  }
  if (fs::exists(out_dir / "best.ckpt")) manifest.output(out_dir / "best.ckpt");
  manifest.write(out_dir);
  out << "trained " << result.state.step << " steps; checkpoint " << (out_dir / "final.ckpt").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string vocab;
  std::string data;
  std::string split = "test";
  std::string setting;
  std::string name;
  int batch_size = 32;
  bool posterior_mean = false;
};

int cmd_eval(const EvalArgs& a, const CLI::App* app, std::ostream& out, std::ostream& err) {
  const fs::path ckpt = input_path(a.checkpoint);
  LoadedModel m = load_model(ckpt, a.vocab);
  const fs::path data = input_path(a.data);
  require_dir(data, "data directory");
  const std::string suffix = m.train_config.template_depth > 0 ? ".tmpl.ids" : ".ids";
  const fs::path ids = data / (a.split + suffix);
  require_file(ids, "evaluation ids");
  if (a.batch_size < 1) throw UsageError("--batch-size must be positive");

  EvalOptions o;
  o.variant = m.checkpoint.model.config().variant;
  o.setting = a.setting.empty() ? m.checkpoint.model.config().setting : parse_setting(a.setting);
  o.seed = a.common.seed;
  o.batch_size = a.batch_size;
  o.use_posterior_mean = a.posterior_mean;
  const ReconstructionReport r = reconstruction_metrics(m.checkpoint.model, read_ids(ids), o);
  if (r.warning) err << "warning: " << *r.warning << '\n';

  const std::string name = a.name.empty() ? model_name(o.variant) : a.name;
  const std::string table = reconstruction_header_tsv() + "\n" + reconstruction_row_tsv(name, r) + "\n";
  const fs::path out_dir = a.common.out;
  fs::create_directories(out_dir);
  write_text(out_dir / "eval.tsv", table);
  Manifest manifest("eval", app, a.common.seed);
  manifest.input("checkpoint", ckpt);
  manifest.input("data", ids);
  manifest.output(out_dir / "eval.tsv");
  manifest.extra()["totals"] = {{"examples", r.examples},
                                {"sentence_tokens", r.sentence_tokens},
                                {"tree_tokens", r.tree_tokens},
                                {"sentence_nll", r.sentence_nll_total},
                                {"tree_nll", r.tree_nll_total},
                                {"kl_x", r.kl_x_total},
                                {"kl_y", r.kl_y_total}};
  manifest.write(out_dir);
  out << table;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// syntax-eval

struct SyntaxArgs {
  Common common;
  std::string checkpoint;
  std::string vocab;
  std::string pairs;
  std::string name;
  int samples = 10;
};

int cmd_syntax_eval(const SyntaxArgs& a, const CLI::App* app, std::ostream& out, std::ostream&) {
  const fs::path ckpt = input_path(a.checkpoint);
  const fs::path pairs_path = input_path(a.pairs);
  require_file(pairs_path, "pair file");
  if (a.samples < 1) throw UsageError("--samples must be positive");
  LoadedModel m = load_model(ckpt, a.vocab);
  const auto pairs = read_grammar_pairs(pairs_path);
  const Variant v = m.checkpoint.model.config().variant;
  const SentenceScorer scorer = make_model_scorer(m.checkpoint.model, m.sentence_vocab, m.tree_vocab, v,
                                                  a.samples, a.common.seed, depth_of(m.train_config));
  const SyntaxEvalResult result = targeted_syntactic_eval(scorer, pairs);
  const std::string table = syntax_table_tsv(a.name.empty() ? model_name(v) : a.name, result);

  const fs::path out_dir = a.common.out;
  fs::create_directories(out_dir);
  write_text(out_dir / "syntax.tsv", table);
  Manifest manifest("syntax-eval", app, a.common.seed);
  manifest.input("checkpoint", ckpt);
  manifest.input("pairs", pairs_path);
  manifest.output(out_dir / "syntax.tsv");
  manifest.write(out_dir);
  out << table;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// generate / paraphrase / interpolate

struct DecodeArgs {
  std::string mode = "greedy";
  double temperature = 1.0;
  int max_tree_len = 300;
  int max_sent_len = 150;
};

void add_decode(CLI::App* app, DecodeArgs& d) {
  app->add_option("--mode", d.mode, "greedy or sample");
  app->add_option("--decode-temperature", d.temperature, "logit divisor in sample mode");
  app->add_option("--max-tree-len", d.max_tree_len, "tree token limit");
  app->add_option("--max-sent-len", d.max_sent_len, "sentence token limit");
}

DecodeOptions to_options(const DecodeArgs& d, std::uint64_t seed) {
  try {
    DecodeOptions o = decode_options(d.mode, d.temperature, d.max_tree_len, d.max_sent_len, seed);
    o.validate();
    return o;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

struct GenerateArgs {
  Common common;
  std::string checkpoint;
  std::string vocab;
  DecodeArgs decode;
  std::string variant;
  int n = 10;
};

int cmd_generate(const GenerateArgs& a, const CLI::App* app, std::ostream& out, std::ostream&) {
  const fs::path ckpt = input_path(a.checkpoint);
  LoadedModel m = load_model(ckpt, a.vocab);
  if (a.n < 0) throw UsageError("--n must be non-negative");
  const DecodeOptions o = to_options(a.decode, a.common.seed);
  const Variant v = a.variant.empty() ? m.checkpoint.model.config().variant : parse_variant(a.variant);
  const Vocabularies vocabs{m.sentence_vocab, m.tree_vocab};
  std::string text;
  for (const auto& g : generate(m.checkpoint.model, vocabs, v, static_cast<std::size_t>(a.n), o)) {
    text += to_record(g) + "\n";
  }
  const fs::path out_dir = a.common.out;
  fs::create_directories(out_dir);
  write_text(out_dir / "generations.jsonl", text);
  Manifest manifest("generate", app, a.common.seed);
  manifest.input("checkpoint", ckpt);
  manifest.output(out_dir / "generations.jsonl");
  manifest.write(out_dir);
  out << text;
  return kExitOk;
}

struct ParaphraseArgs {
  Common common;
  std::string checkpoint;
  std::string vocab;
  DecodeArgs decode;
  std::vector<std::string> sentences;
  std::string input;
  std::vector<std::string> templates;
  double temperature = 1.0;
  int n = 3;
};

int cmd_paraphrase(const ParaphraseArgs& a, const CLI::App* app, std::ostream& out, std::ostream&) {
  const fs::path ckpt = input_path(a.checkpoint);
  std::vector<std::string> sentences = a.sentences;
  if (!a.input.empty()) {
    const fs::path in = input_path(a.input);
    require_file(in, "input file");
    for (auto& line : read_lines(in)) {
      if (!line.empty()) sentences.push_back(std::move(line));
    }
  }
  if (sentences.empty()) throw UsageError("give --sentence or --input");
  if (a.n < 0) throw UsageError("--n must be non-negative");
  LoadedModel m = load_model(ckpt, a.vocab);
  const DecodeOptions o = to_options(a.decode, a.common.seed);
  const Vocabularies vocabs{m.sentence_vocab, m.tree_vocab};
  const std::optional<std::size_t> depth = depth_of(m.train_config);

  std::string text;
  if (!a.templates.empty()) {
    text = "Template\tParaphrase\n";
    for (const auto& s : sentences) {
      text += "original\t" + s + "\n";
      for (const auto& t : a.templates) {
        TreeSequence tmpl = split_tokens(t);
        if (validate_sequence(tmpl).valid && depth) tmpl = simplify_template(delinearize(tmpl), *depth);
        const Generation g = paraphrase_i(m.checkpoint.model, vocabs, s, tmpl, o);
        text += join_detached(tmpl) + "\t" + g.sentence_text() + "\n";
      }
    }
  } else {
    for (const auto& s : sentences) {
      text += "Ori\t" + s + "\n";
      const auto gens = paraphrase_c(m.checkpoint.model, vocabs, s, a.temperature,
                                     static_cast<std::size_t>(a.n), a.common.seed, o);
      for (std::size_t i = 0; i < gens.size(); ++i) {
        text += "Gen" + std::to_string(i + 1) + "\t" + gens[i].sentence_text() + "\n";
      }
    }
  }
  const fs::path out_dir = a.common.out;
  fs::create_directories(out_dir);
  write_text(out_dir / "paraphrases.tsv", text);
  Manifest manifest("paraphrase", app, a.common.seed);
  manifest.input("checkpoint", ckpt);
  if (!a.input.empty()) manifest.input("input", input_path(a.input));
  manifest.extra()["route"] = a.templates.empty() ? "paraphrase_c" : "paraphrase_i";
  manifest.output(out_dir / "paraphrases.tsv");
  manifest.write(out_dir);
  out << text;
  return kExitOk;
}

struct InterpolateArgs {
  Common common;
  std::string checkpoint;
  std::string vocab;
  std::string from;
  std::string to;
  int steps = 5;
  int max_tree_len = 300;
  int max_sent_len = 150;
};

int cmd_interpolate(const InterpolateArgs& a, const CLI::App* app, std::ostream& out, std::ostream&) {
  const fs::path ckpt = input_path(a.checkpoint);
  if (a.steps < 2) throw UsageError("--steps must be at least 2");
  LoadedModel m = load_model(ckpt, a.vocab);
  DecodeArgs d;
  d.max_tree_len = a.max_tree_len;
  d.max_sent_len = a.max_sent_len;
  const DecodeOptions o = to_options(d, a.common.seed);
  const Vocabularies vocabs{m.sentence_vocab, m.tree_vocab};
  const auto path = interpolate(m.checkpoint.model, vocabs, a.from, a.to, a.steps, o);
  std::string text;
  for (std::size_t k = 0; k < path.size(); ++k) {
    char t[16];
    std::snprintf(t, sizeof t, "%.2f", static_cast<double>(k) / static_cast<double>(path.size() - 1));
    text += std::string(t) + "\t" + path[k].sentence_text() + "\t" + path[k].tree_text() + "\n";
  }
  const fs::path out_dir = a.common.out;
  fs::create_directories(out_dir);
  write_text(out_dir / "interpolation.tsv", text);
  Manifest manifest("interpolate", app, a.common.seed);
  manifest.input("checkpoint", ckpt);
  manifest.output(out_dir / "interpolation.tsv");
  manifest.write(out_dir);
  out << text;
  return kExitOk;
}

// Expands "--config FILE" into "--key=value" arguments placed before the
// user's own flags, so explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].starts_with("--config=")) path = args[i].substr(9);
  }
  if (!path || args.empty()) return args;
  const fs::path p = input_path(*path);
  require_file(p, "config file");
  std::vector<std::string> out{args.front()};
  for (const auto& [key, value] : read_kv_file(p)) {
    if (key == "config") continue;
    out.push_back("--" + hyphenate(key) + "=" + value);
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Syntax-infused variational autoencoder toolkit", "sivae"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.set_version_flag("--version", std::string("sivae ") + SIVAE_VERSION);

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "build vocabularies, id streams and corpus statistics");
  add_common(pre_cmd, pre.common);
  pre_cmd->add_option("--data", pre.data, "directory with <split>.sent and <split>.tree")->required();
  pre_cmd->add_option("--min-count", pre.min_count, "sentence tokens rarer than this become UNK");
  pre_cmd->add_option("--template-depth", pre.template_depth, "also write depth-truncated .tmpl streams (0 = off)");
  pre_cmd->add_option("--max-errors", pre.max_errors, "malformed lines tolerated before failing");
  pre_cmd->add_option("--name", pre.name, "dataset name for the statistics table");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "fit a model");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--data", train.data, "preprocessed directory")->required();
  train_cmd->add_option("--resume", train.resume, "checkpoint to continue from");
  train_cmd->add_flag("--no-valid", train.no_valid, "skip per-epoch validation");
  const TrainConfig defaults;
  for (const auto& [key, value] : defaults.to_kv()) {
    if (key == "seed") continue;
    train.flags[key] = value;
    train_cmd->add_option("--" + hyphenate(key), train.flags[key], train_flag_help().at(key))
        ->default_str(value);
  }

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "reconstruction perplexity, NLL and KL");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--vocab", ev.vocab, "directory with vocab.sent/vocab.tree (default: checkpoint's)");
  eval_cmd->add_option("--data", ev.data, "preprocessed directory")->required();
  eval_cmd->add_option("--split", ev.split, "split to score");
  eval_cmd->add_option("--setting", ev.setting, "standard or inputless (default: the model's)");
  eval_cmd->add_option("--name", ev.name, "row label");
  eval_cmd->add_option("--batch-size", ev.batch_size, "examples per batch");
  eval_cmd->add_flag("--posterior-mean", ev.posterior_mean, "decode from posterior means");

  SyntaxArgs syn;
  auto* syn_cmd = app.add_subcommand("syntax-eval", "targeted syntactic evaluation on minimal pairs");
  add_common(syn_cmd, syn.common);
  syn_cmd->add_option("--checkpoint", syn.checkpoint, "model checkpoint")->required();
  syn_cmd->add_option("--vocab", syn.vocab, "directory with vocab.sent/vocab.tree (default: checkpoint's)");
  syn_cmd->add_option("--pairs", syn.pairs, "tab-separated pair file")->required();
  syn_cmd->add_option("--samples", syn.samples, "importance samples per sentence");
  syn_cmd->add_option("--name", syn.name, "row label");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "sample sentences and trees from the prior");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "model checkpoint")->required();
  gen_cmd->add_option("--vocab", gen.vocab, "directory with vocab.sent/vocab.tree (default: checkpoint's)");
  gen_cmd->add_option("--n", gen.n, "number of samples");
  gen_cmd->add_option("--variant", gen.variant, "prior to sample z_y from: c or i (default: the model's)");
  add_decode(gen_cmd, gen.decode);

  ParaphraseArgs para;
  auto* para_cmd = app.add_subcommand("paraphrase", "template (variant i) or prior (variant c) paraphrasing");
  add_common(para_cmd, para.common);
  para_cmd->add_option("--checkpoint", para.checkpoint, "model checkpoint")->required();
  para_cmd->add_option("--vocab", para.vocab, "directory with vocab.sent/vocab.tree (default: checkpoint's)");
  para_cmd->add_option("--sentence", para.sentences, "source sentence (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  para_cmd->add_option("--input", para.input, "file of source sentences, one per line");
  para_cmd->add_option("--template", para.templates, "target template, e.g. \"(S(NP)(VP)(.))\" (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  para_cmd->add_option("--temperature", para.temperature, "prior standard-deviation scale (no template)");
  para_cmd->add_option("--n", para.n, "paraphrases per sentence (no template)");
  add_decode(para_cmd, para.decode);

  InterpolateArgs interp;
  auto* interp_cmd = app.add_subcommand("interpolate", "decode points between two sentence latents");
  add_common(interp_cmd, interp.common);
  interp_cmd->add_option("--checkpoint", interp.checkpoint, "model checkpoint")->required();
  interp_cmd->add_option("--vocab", interp.vocab, "directory with vocab.sent/vocab.tree (default: checkpoint's)");
  interp_cmd->add_option("--from", interp.from, "first sentence")->required();
  interp_cmd->add_option("--to", interp.to, "second sentence")->required();
  interp_cmd->add_option("--steps", interp.steps, "number of points including both ends");
  interp_cmd->add_option("--max-tree-len", interp.max_tree_len, "tree token limit");
  interp_cmd->add_option("--max-sent-len", interp.max_sent_len, "sentence token limit");

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run 'sivae --help' for usage\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*pre_cmd) return cmd_preprocess(pre, pre_cmd, out, err);
    if (*train_cmd) return cmd_train(train, train_cmd, out, err);
    if (*eval_cmd) return cmd_eval(ev, eval_cmd, out, err);
    if (*syn_cmd) return cmd_syntax_eval(syn, syn_cmd, out, err);
    if (*gen_cmd) return cmd_generate(gen, gen_cmd, out, err);
    if (*para_cmd) return cmd_paraphrase(para, para_cmd, out, err);
    if (*interp_cmd) return cmd_interpolate(interp, interp_cmd, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sivae::cli
