#include "sivae/generation.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

#include "sivae/error.hpp"

namespace sivae {

namespace {

int choose(const Vector& logits, const DecodeOptions& opts, Rng& rng) {
  Eigen::Index best = 0;
  if (opts.mode == DecodeMode::Greedy) {
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }
  const Vector scaled = logits / opts.temperature;
  const double m = scaled.maxCoeff();
  const Vector p = (scaled.array() - m).exp();
  std::discrete_distribution<int> dist(p.data(), p.data() + p.size());
  return dist(rng);
}

std::vector<int> wrap(const std::vector<int>& body) {
  std::vector<int> out;
  out.reserve(body.size() + 2);
  out.push_back(Vocabulary::kBos);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(Vocabulary::kEos);
  return out;
}

void require_variant(const Model& model, Variant v, const char* what) {
  if (model.config().variant != v) {
    throw Error(ErrorCode::ModeMismatch, std::string(what) + " needs a model trained as variant " +
                                             std::string(to_string(v)));
  }
}

LatentVector prior_latent(const Model& model, const LatentVector& z_x) {
  if (model.config().variant == Variant::Conditional) return conditional_prior(model, z_x).mean;
  return Vector::Zero(model.config().latent);
}

}  // namespace

std::string_view to_string(DecodeMode m) { return m == DecodeMode::Greedy ? "greedy" : "sample"; }

DecodeMode parse_decode_mode(std::string_view text) {
  if (text == "greedy") return DecodeMode::Greedy;
  if (text == "sample") return DecodeMode::Sample;
  throw Error(ErrorCode::InvalidArgument, "unknown decode mode '" + std::string(text) + "'");
}

void DecodeOptions::validate() const {
  if (!(temperature > 0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  }
  if (max_tree_len < 2 || max_sent_len < 2) {
    throw Error(ErrorCode::InvalidArgument, "maximum lengths must be at least 2");
  }
}

std::string Generation::sentence_text() const {
  std::string out;
  for (const auto& w : sentence) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string Generation::tree_text() const { return join_spaced(tree); }

Generation decode_latents(const Model& model, const Vocabularies& vocabs, const LatentVector& z_x,
                          const LatentVector& z_y, const DecodeOptions& opts, Rng& rng) {
  opts.validate();
  const ModelConfig& cfg = model.config();
  if (z_x.size() != cfg.latent || z_y.size() != cfg.latent) {
    throw Error(ErrorCode::DimensionMismatch, "latent size differs from the model");
  }
  Generation g;

  DecoderState state = DecoderState::zeros(cfg.hidden);
  int prev = Vocabulary::kBos;
  int depth = 0;
  while (true) {
    StepOutput out = tree_decoder_step(model, z_y, prev, state, cfg.setting);
    state = std::move(out.state);
    if (opts.record_logits) g.tree_logits.push_back(out.logits);
    const int tok = choose(out.logits, opts, rng);
    if (tok == Vocabulary::kEos) break;
    g.tree_ids.push_back(tok);
    const std::string& text = vocabs.tree.token(tok);
    if (is_open_token(text)) ++depth;
    else if (text == ")") --depth;
    prev = tok;
    const bool closed = depth <= 0 && text == ")";
    if (closed || static_cast<int>(g.tree_ids.size()) >= opts.max_tree_len) {
      state = tree_decoder_step(model, z_y, prev, state, cfg.setting).state;
      break;
    }
  }
  const Vector tree_h = state.h;

  state = DecoderState::zeros(cfg.hidden);
  prev = Vocabulary::kBos;
  while (static_cast<int>(g.sentence_ids.size()) < opts.max_sent_len) {
    StepOutput out = sentence_decoder_step(model, z_x, tree_h, prev, state, cfg.setting);
    state = std::move(out.state);
    if (opts.record_logits) g.sentence_logits.push_back(out.logits);
    const int tok = choose(out.logits, opts, rng);
    if (tok == Vocabulary::kEos) break;
    g.sentence_ids.push_back(tok);
    prev = tok;
  }

  for (int id : g.tree_ids) g.tree.push_back(vocabs.tree.token(id));
  g.sentence = denumericalize(g.sentence_ids, vocabs.sentence, false);
  g.tree_valid = validate_sequence(g.tree).valid;
  return g;
}

std::vector<Generation> generate(const Model& model, const Vocabularies& vocabs, Variant variant,
                                 std::size_t n, const DecodeOptions& opts) {
  opts.validate();
  if (variant == Variant::Conditional) require_variant(model, variant, "conditional generation");
  const int d = model.config().latent;
  Rng rng(opts.seed);
  std::vector<Generation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LatentVector z_x = standard_normal(rng, d, 1);
    LatentVector z_y;
    if (variant == Variant::Conditional) {
      const DiagonalGaussian prior = conditional_prior(model, z_x);
      z_y = reparameterize(prior, standard_normal(rng, d, 1));
    } else {
      z_y = standard_normal(rng, d, 1);
    }
    out.push_back(decode_latents(model, vocabs, z_x, z_y, opts, rng));
  }
  return out;
}

LatentVector sentence_latent(const Model& model, const Vocabulary& sentence_vocab,
                             const std::string& sentence) {
  const auto words = tokenize_sentence(sentence);
  if (words.empty()) throw Error(ErrorCode::EmptySequence, "empty sentence");
  const auto ids = wrap(numericalize_sentence(words, sentence_vocab));
  return encode_sentence(model, ids).mean;
}

Generation paraphrase_i(const Model& model, const Vocabularies& vocabs, const std::string& sentence,
                        const TreeSequence& template_tokens, const DecodeOptions& opts) {
  opts.validate();
  const SequenceCheck check = validate_sequence(template_tokens);
  if (!check.valid) {
    throw Error(ErrorCode::MalformedTemplate,
                "template is not a balanced tree (token " + std::to_string(check.first_violation) + ")");
  }
  require_variant(model, Variant::Independent, "template paraphrasing");
  const auto words = tokenize_sentence(sentence);
  if (words.empty()) throw Error(ErrorCode::EmptySequence, "empty sentence");
  const auto x = wrap(numericalize_sentence(words, vocabs.sentence));
  const auto y = wrap(tree_token_ids(template_tokens, vocabs.tree));

  Rng rng(opts.seed);
  const int d = model.config().latent;
  const DiagonalGaussian q_x = encode_sentence(model, x);
  const DiagonalGaussian q_y = encode_tree(model, y, std::nullopt, Variant::Independent);
  LatentVector z_x = q_x.mean;
  LatentVector z_y = q_y.mean;
  if (opts.mode == DecodeMode::Sample) {
    z_x = reparameterize(q_x, standard_normal(rng, d, 1));
    z_y = reparameterize(q_y, standard_normal(rng, d, 1));
  }
  return decode_latents(model, vocabs, z_x, z_y, opts, rng);
}

std::vector<Generation> paraphrase_c(const Model& model, const Vocabularies& vocabs,
                                     const std::string& sentence, double temperature, std::size_t n,
                                     std::uint64_t seed, const DecodeOptions& opts) {
  if (!(temperature >= 0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be non-negative");
  }
  require_variant(model, Variant::Conditional, "prior paraphrasing");
  const LatentVector z_x = sentence_latent(model, vocabs.sentence, sentence);
  const DiagonalGaussian prior = conditional_prior(model, z_x);
  const Vector sd = prior.stddev() * temperature;
  Rng rng(seed);
  std::vector<Generation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector eps = standard_normal(rng, model.config().latent, 1);
    const LatentVector z_y = prior.mean + (sd.array() * eps.array()).matrix();
    out.push_back(decode_latents(model, vocabs, z_x, z_y, opts, rng));
  }
  return out;
}

Generation decode_sentence_latent(const Model& model, const Vocabularies& vocabs,
                                  const LatentVector& z_x, const DecodeOptions& opts) {
  DecodeOptions greedy = opts;
  greedy.mode = DecodeMode::Greedy;
  Rng rng(greedy.seed);
  return decode_latents(model, vocabs, z_x, prior_latent(model, z_x), greedy, rng);
}

std::vector<Generation> interpolate_latents(const Model& model, const Vocabularies& vocabs,
                                            const LatentVector& z_a, const LatentVector& z_b,
                                            int steps, const DecodeOptions& opts) {
  if (steps < 2) throw Error(ErrorCode::InvalidArgument, "interpolation needs at least 2 steps");
  if (z_a.size() != z_b.size()) throw Error(ErrorCode::DimensionMismatch, "endpoint sizes differ");
  std::vector<Generation> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    LatentVector z;
    if (k == 0) z = z_a;
    else if (k == steps - 1) z = z_b;
    else {
      const double t = static_cast<double>(k) / static_cast<double>(steps - 1);
      z = (1.0 - t) * z_a + t * z_b;
    }
    out.push_back(decode_sentence_latent(model, vocabs, z, opts));
  }
  return out;
}

std::vector<Generation> interpolate(const Model& model, const Vocabularies& vocabs,
                                    const std::string& sentence_a, const std::string& sentence_b,
                                    int steps, const DecodeOptions& opts) {
  const LatentVector z_a = sentence_latent(model, vocabs.sentence, sentence_a);
  const LatentVector z_b = sentence_latent(model, vocabs.sentence, sentence_b);
  return interpolate_latents(model, vocabs, z_a, z_b, steps, opts);
}

std::string to_record(const Generation& g) {
  nlohmann::ordered_json j;
  j["tree"] = g.tree_text();
  j["sentence"] = g.sentence_text();
  j["valid"] = g.tree_valid;
  return j.dump();
}

}  // namespace sivae
