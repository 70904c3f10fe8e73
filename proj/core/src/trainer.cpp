#include "sivae/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sivae/error.hpp"

namespace sivae {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      value = static_cast<T>(std::stod(text, &used));
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad value for " + key + ": '" + text + "'");
    }
  } else {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw Error(ErrorCode::InvalidArgument, "bad value for " + key + ": '" + text + "'");
    }
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(ErrorCode::InvalidArgument, "bad value for " + key + ": '" + text + "'");
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, what);
  };
  require(learning_rate >= 0.0, "learning_rate must be non-negative");
  require(batch_size > 0, "batch_size must be positive");
  require(epochs >= 0, "epochs must be non-negative");
  require(word_dropout >= 0.0 && word_dropout <= 1.0, "word_dropout must be in [0, 1]");
  require(anneal_cap > 0.0 && anneal_cap <= 1.0, "anneal_cap must be in (0, 1]");
  require(anneal_rate > 0.0 && anneal_rate <= 1.0, "anneal_rate must be in (0, 1]");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(checkpoint_every >= 0 && max_steps >= 0, "step counts must be non-negative");
  require(embed > 0 && hidden > 0 && latent > 0 && prior_hidden > 0, "model sizes must be positive");
  require(init_scale >= 0.0, "init_scale must be non-negative");
  require(template_depth >= 0, "template_depth must be non-negative");
  require(max_sentence_len > 0 && max_tree_len > 0, "length limits must be positive");
}

ModelConfig TrainConfig::model_config(int sentence_vocab, int tree_vocab) const {
  ModelConfig c;
  c.variant = variant;
  c.setting = setting;
  c.sentence_vocab = sentence_vocab;
  c.tree_vocab = tree_vocab;
  c.embed = embed;
  c.hidden = hidden;
  c.latent = latent;
  c.prior_hidden = prior_hidden;
  c.init_scale = init_scale;
  return c;
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {
      {"variant", std::string(to_string(variant))},
      {"setting", std::string(to_string(setting))},
      {"learning_rate", fmt_double(learning_rate)},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"word_dropout", fmt_double(word_dropout)},
      {"anneal_cap", fmt_double(anneal_cap)},
      {"anneal_rate", fmt_double(anneal_rate)},
      {"clip_norm", fmt_double(clip_norm)},
      {"seed", std::to_string(seed)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"max_steps", std::to_string(max_steps)},
      {"shuffle", shuffle ? "true" : "false"},
      {"embed", std::to_string(embed)},
      {"hidden", std::to_string(hidden)},
      {"latent", std::to_string(latent)},
      {"prior_hidden", std::to_string(prior_hidden)},
      {"init_scale", fmt_double(init_scale)},
      {"template_depth", std::to_string(template_depth)},
      {"max_sentence_len", std::to_string(max_sentence_len)},
      {"max_tree_len", std::to_string(max_tree_len)},
  };
}

void TrainConfig::apply_kv(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "variant") variant = parse_variant(value);
    else if (key == "setting") setting = parse_setting(value);
    else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
    else if (key == "batch_size") batch_size = parse_number<int>(key, value);
    else if (key == "epochs") epochs = parse_number<int>(key, value);
    else if (key == "word_dropout") word_dropout = parse_number<double>(key, value);
    else if (key == "anneal_cap") anneal_cap = parse_number<double>(key, value);
    else if (key == "anneal_rate") anneal_rate = parse_number<double>(key, value);
    else if (key == "clip_norm") clip_norm = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "checkpoint_every") checkpoint_every = parse_number<std::int64_t>(key, value);
    else if (key == "max_steps") max_steps = parse_number<std::int64_t>(key, value);
    else if (key == "shuffle") shuffle = parse_bool(key, value);
    else if (key == "embed") embed = parse_number<int>(key, value);
    else if (key == "hidden") hidden = parse_number<int>(key, value);
    else if (key == "latent") latent = parse_number<int>(key, value);
    else if (key == "prior_hidden") prior_hidden = parse_number<int>(key, value);
    else if (key == "init_scale") init_scale = parse_number<double>(key, value);
    else if (key == "template_depth") template_depth = parse_number<int>(key, value);
    else if (key == "max_sentence_len") max_sentence_len = parse_number<int>(key, value);
    else if (key == "max_tree_len") max_tree_len = parse_number<int>(key, value);
    else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  }
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.apply_kv(kv);
  return c;
}

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::size_t lineno = 0;
  for (const auto& raw : read_lines(path)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument,
                  path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

void write_kv_file(const std::filesystem::path& path, const std::map<std::string, std::string>& kv) {
  std::vector<std::string> lines;
  for (const auto& [k, v] : kv) lines.push_back(k + " = " + v);
  write_lines(path, lines);
}

std::int64_t planned_steps(const TrainConfig& config, std::size_t n) {
  const auto per_epoch = static_cast<std::int64_t>(num_batches(n, config.batch_size));
  std::int64_t total = per_epoch * config.epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);
  return total;
}

TrainState init_state(const TrainConfig& config, int sentence_vocab, int tree_vocab,
                      std::int64_t total_batches) {
  config.validate();
  TrainState s(Model(config.model_config(sentence_vocab, tree_vocab), config.seed));
  s.rng.seed(config.seed + 1);
  s.total_batches = std::max<std::int64_t>(1, total_batches);
  return s;
}

LossBreakdown train_step(TrainState& state, const Batch& batch, const TrainConfig& config) {
  const AnnealSchedule schedule{config.anneal_cap, config.anneal_rate, state.total_batches};
  const double kl_weight = anneal_weight(state.step, schedule);
  const Batch dropped = apply_word_dropout(batch, config.word_dropout, state.rng);
  const LatentNoise noise = draw_noise(state.rng, batch.size(), state.model.config().latent);

  ParameterStore& params = state.model.params();
  params.zero_grad();
  ad::Graph g;
  const auto bound = graph::bind(g, state.model);
  const auto terms = graph::build_elbo(bound, batch, &dropped, config.variant, noise);
  const ad::Expr objective = graph::mean_objective(terms, kl_weight);
  g.backward(objective);
  const LossBreakdown loss = graph::summarize(terms, kl_weight);

  double sq = 0.0;
  for (const ad::Parameter* p : params.all()) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm) || !std::isfinite(loss.elbo)) {
    throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient at step " + std::to_string(state.step));
  }
  const double factor = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
  for (ad::Parameter* p : params.all()) p->value += (config.learning_rate * factor) * p->grad;
  state.last_grad_norm = norm * factor;
  ++state.step;
  return loss;
}

Dataset filter_by_length(const Dataset& dataset, const TrainConfig& config, std::size_t* skipped) {
  Dataset out;
  std::size_t dropped = 0;
  for (const auto& ex : dataset.examples) {
    const auto s = static_cast<int>(ex.sentence.size()) - 2;
    const auto t = static_cast<int>(ex.tree.size()) - 2;
    if (s > config.max_sentence_len || t > config.max_tree_len) {
      ++dropped;
      continue;
    }
    out.examples.push_back(ex);
  }
  if (skipped) *skipped = dropped;
  return out;
}

CheckpointMeta make_meta(const TrainState& state, const TrainConfig& config,
                         const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab) {
  CheckpointMeta meta;
  meta.model = state.model.config();
  meta.train_config = config.to_kv();
  meta.sentence_vocab_hash = sentence_vocab.hash();
  meta.tree_vocab_hash = tree_vocab.hash();
  meta.step = state.step;
  meta.epoch = state.epoch;
  meta.total_batches = state.total_batches;
  std::ostringstream os;
  os << state.rng;
  meta.rng_state = os.str();
  meta.best_valid_elbo = state.best_valid_elbo;
  return meta;
}

void save_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config,
                const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab) {
  save_checkpoint(path, state.model, make_meta(state, config, sentence_vocab, tree_vocab));
}

TrainState restore_state(Checkpoint checkpoint) {
  TrainState s(std::move(checkpoint.model));
  s.step = checkpoint.meta.step;
  s.epoch = checkpoint.meta.epoch;
  s.total_batches = checkpoint.meta.total_batches;
  s.best_valid_elbo = checkpoint.meta.best_valid_elbo;
  std::istringstream is(checkpoint.meta.rng_state);
  is >> s.rng;
  if (!is) throw Error(ErrorCode::CheckpointMismatch, "corrupt rng state in checkpoint");
  return s;
}

LossBreakdown evaluate_elbo(const Model& model, Variant objective, const Dataset& data,
                            int batch_size, std::uint64_t seed) {
  LossBreakdown total;
  if (data.size() == 0) return total;
  Rng rng(seed);
  BatchIterator it(data, batch_size, false, 0);
  double n = 0;
  while (!it.done()) {
    const Batch batch = it.next();
    const LatentNoise noise = draw_noise(rng, batch.size(), model.config().latent);
    const LossBreakdown l = elbo(model, objective, batch, 1.0, noise);
    const double w = l.examples;
    total.rec_x += w * l.rec_x;
    total.rec_y += w * l.rec_y;
    total.kl_x += w * l.kl_x;
    total.kl_y += w * l.kl_y;
    n += w;
  }
  total.rec_x /= n;
  total.rec_y /= n;
  total.kl_x /= n;
  total.kl_y /= n;
  total.kl_weight = 1.0;
  total.elbo = total.rec_x + total.rec_y - (total.kl_x + total.kl_y);
  total.examples = static_cast<int>(n);
  return total;
}

FitResult fit(const Dataset& train, const Dataset& valid, const TrainConfig& config, FitOptions options) {
  config.validate();
  if (options.out_dir && (!options.sentence_vocab || !options.tree_vocab)) {
    throw Error(ErrorCode::InvalidArgument, "checkpointing needs both vocabularies");
  }
  std::size_t skipped = 0;
  const Dataset data = filter_by_length(train, config, &skipped);
  const std::int64_t total = planned_steps(config, data.size());

  FitResult result(options.resume ? std::move(*options.resume) : [&] {
    const int sv = options.sentence_vocab ? options.sentence_vocab->size() : 0;
    const int tv = options.tree_vocab ? options.tree_vocab->size() : 0;
    if (sv == 0 || tv == 0) throw Error(ErrorCode::InvalidArgument, "fit needs both vocabularies");
    return init_state(config, sv, tv, total);
  }());
  result.skipped_long = skipped;
  if (config.epochs == 0 || data.size() == 0) return result;

  TrainState& state = result.state;
  const auto per_epoch = static_cast<std::int64_t>(num_batches(data.size(), config.batch_size));

  std::ofstream log_file;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_file.open(*options.out_dir / "train.log.jsonl", std::ios::app);
  }
  auto save = [&](const std::string& name) {
    if (options.out_dir) {
      save_state(*options.out_dir / name, state, config, *options.sentence_vocab, *options.tree_vocab);
    }
  };

  while (state.step < total) {
    const std::int64_t epoch = state.step / per_epoch;
    BatchIterator it(data, config.batch_size, config.shuffle, config.seed, static_cast<std::uint64_t>(epoch));
    it.skip(static_cast<std::size_t>(state.step % per_epoch));
    while (!it.done() && state.step < total) {
      const std::int64_t step = state.step;
      const LossBreakdown loss = train_step(state, it.next(), config);
      state.epoch = state.step / per_epoch;
      const std::string record = to_log_record(step, loss);
      if (log_file) log_file << record << '\n';
      if (options.log) options.log(record);
      if (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0) {
        save("step-" + std::to_string(state.step) + ".ckpt");
      }
    }
    if (it.done() && valid.size() > 0) {
      // Separate noise stream: validation never touches the training rng.
      const LossBreakdown v = evaluate_elbo(state.model, config.variant, valid, config.batch_size,
                                            config.seed ^ (0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(epoch)));
      result.validation.push_back(v);
      if (!state.best_valid_elbo || v.elbo > *state.best_valid_elbo) {
        state.best_valid_elbo = v.elbo;
        save("best.ckpt");
      }
    }
  }
  save("final.ckpt");
  return result;
}

}  // namespace sivae
