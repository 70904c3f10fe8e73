#include "sivae/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "sivae/error.hpp"

namespace sivae {

namespace {

std::int64_t predicted_tokens(const PaddedIds& ids) {
  std::int64_t n = 0;
  for (int len : ids.lengths) n += std::max(0, len - 1);
  return n;
}

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

double logsumexp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

double ReconstructionReport::sentence_ppl() const {
  return sentence_tokens ? std::exp(sentence_nll_total / static_cast<double>(sentence_tokens)) : 0.0;
}
double ReconstructionReport::tree_ppl() const {
  return tree_tokens ? std::exp(tree_nll_total / static_cast<double>(tree_tokens)) : 0.0;
}
double ReconstructionReport::sentence_nll() const {
  return examples ? sentence_nll_total / static_cast<double>(examples) : 0.0;
}
double ReconstructionReport::tree_nll() const {
  return examples ? tree_nll_total / static_cast<double>(examples) : 0.0;
}
double ReconstructionReport::kl_x() const { return examples ? kl_x_total / static_cast<double>(examples) : 0.0; }
double ReconstructionReport::kl_y() const { return examples ? kl_y_total / static_cast<double>(examples) : 0.0; }

ReconstructionReport reconstruction_metrics(const Model& model, const Dataset& dataset,
                                            const EvalOptions& options) {
  ReconstructionReport report;
  report.setting = options.setting;
  if (options.setting != model.config().setting) {
    report.warning = "model trained with the " + std::string(to_string(model.config().setting)) +
                     " decoder setting is scored " + std::string(to_string(options.setting));
  }
  ModelConfig scoring_config = model.config();
  scoring_config.setting = options.setting;

  Rng rng(options.seed);
  BatchIterator it(dataset, options.batch_size, false, 0);
  while (!it.done()) {
    const Batch batch = it.next();
    LatentNoise noise;
    if (options.use_posterior_mean) {
      noise.x = Matrix::Zero(batch.size(), scoring_config.latent);
      noise.y = Matrix::Zero(batch.size(), scoring_config.latent);
    } else {
      noise = draw_noise(rng, batch.size(), scoring_config.latent);
    }
    ad::Graph g(false);
    auto bound = graph::bind(g, model);
    bound.config = &scoring_config;
    const auto terms = graph::build_elbo(bound, batch, nullptr, options.variant, noise);
    report.examples += static_cast<std::size_t>(batch.size());
    report.sentence_nll_total -= terms.rec_x.value().sum();
    report.tree_nll_total -= terms.rec_y.value().sum();
    report.kl_x_total += terms.kl_x.value().sum();
    report.kl_y_total += terms.kl_y.value().sum();
    report.sentence_tokens += predicted_tokens(batch.sentence);
    report.tree_tokens += predicted_tokens(batch.tree);
  }
  return report;
}

std::string reconstruction_header_tsv() { return "Model\tSetting\tPPL\tNLL\tKL"; }

std::string reconstruction_row_tsv(const std::string& model_name, const ReconstructionReport& r) {
  std::ostringstream os;
  os << model_name << '\t' << to_string(r.setting) << '\t'
     << fmt(r.sentence_ppl(), 2) << '(' << fmt(r.tree_ppl(), 2) << ")\t"
     << fmt(r.sentence_nll(), 2) << '(' << fmt(r.tree_nll(), 2) << ")\t"
     << fmt(r.kl_x(), 2) << '(' << fmt(r.kl_y(), 2) << ')';
  return os.str();
}

double log_normal_density(const Vector& z, const Vector& mean, const Vector& log_var) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * (log2pi + log_var.array() + (z - mean).array().square() * (-log_var.array()).exp()).sum();
}

Vector importance_log_weights(const Model& model, const Batch& batch, Variant variant,
                              const LatentNoise& noise) {
  ad::Graph g(false);
  const auto m = graph::bind(g, model);
  const DecoderSetting setting = model.config().setting;
  const auto q_x = graph::encode_sentence(m, batch.sentence);
  const ad::Expr z_x = graph::reparameterize(q_x, noise.x);
  graph::GaussianExpr q_y;
  std::optional<graph::GaussianExpr> prior_y;
  if (variant == Variant::Conditional) {
    q_y = graph::encode_tree(m, batch.tree, z_x, Variant::Conditional);
    prior_y = graph::conditional_prior(m, z_x);
  } else {
    q_y = graph::encode_tree(m, batch.tree, std::nullopt, Variant::Independent);
  }
  const ad::Expr z_y = graph::reparameterize(q_y, noise.y);
  const PaddedIds tree_in = shift_inputs(batch.tree);
  const PaddedIds tree_out = shift_targets(batch.tree);
  const auto tree = graph::decode_tree(m, z_y, tree_in, &tree_out, setting);
  const PaddedIds sent_in = shift_inputs(batch.sentence);
  const PaddedIds sent_out = shift_targets(batch.sentence);
  const auto sent = graph::decode_sentence(m, z_x, tree.final_state.h, sent_in, &sent_out, setting);

  const Eigen::Index rows = batch.size();
  const Eigen::Index d = model.config().latent;
  Vector out(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector zx = z_x.value().row(r).transpose();
    const Vector zy = z_y.value().row(r).transpose();
    double lw = sent.log_likelihood.value()(r, 0) + tree.log_likelihood.value()(r, 0);
    lw += log_normal_density(zx, Vector::Zero(d), Vector::Zero(d));
    if (prior_y) {
      lw += log_normal_density(zy, prior_y->mean.value().row(r).transpose(),
                               prior_y->log_var.value().row(r).transpose());
    } else {
      lw += log_normal_density(zy, Vector::Zero(d), Vector::Zero(d));
    }
    lw -= log_normal_density(zx, q_x.mean.value().row(r).transpose(), q_x.log_var.value().row(r).transpose());
    lw -= log_normal_density(zy, q_y.mean.value().row(r).transpose(), q_y.log_var.value().row(r).transpose());
    out(r) = lw;
  }
  return out;
}

SentenceScore score_sentence(const Model& model, const PairedExample& example, Variant variant,
                             int samples, std::uint64_t seed) {
  if (samples < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be at least 1");
  constexpr int kChunk = 64;
  Rng rng(seed);
  Vector log_w(samples);
  for (int start = 0; start < samples; start += kChunk) {
    const int n = std::min(kChunk, samples - start);
    std::vector<PairedExample> copies(static_cast<std::size_t>(n), example);
    const Batch batch = make_batch(copies);
    const LatentNoise noise = draw_noise(rng, n, model.config().latent);
    log_w.segment(start, n) = importance_log_weights(model, batch, variant, noise);
  }
  SentenceScore s;
  s.samples = samples;
  s.iwae = logsumexp(log_w) - std::log(static_cast<double>(samples));
  s.elbo_estimate = log_w.mean();
  return s;
}

CaseLabel parse_case_label(std::string_view text) {
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "bad case label '" + std::string(text) + "'");
  const auto ph = text.substr(0, dash);
  const auto cx = text.substr(dash + 1);
  CaseLabel l;
  if (ph == "SVA") l.phenomenon = Phenomenon::SVA;
  else if (ph == "RA") l.phenomenon = Phenomenon::RA;
  else if (ph == "NPI") l.phenomenon = Phenomenon::NPI;
  else throw Error(ErrorCode::InvalidArgument, "bad phenomenon in '" + std::string(text) + "'");
  if (cx == "S" || cx == "simple") l.complexity = Complexity::Simple;
  else if (cx == "C" || cx == "complex") l.complexity = Complexity::Complex;
  else throw Error(ErrorCode::InvalidArgument, "bad complexity in '" + std::string(text) + "'");
  return l;
}

std::string to_string(const CaseLabel& l) {
  static constexpr const char* kPh[] = {"SVA", "RA", "NPI"};
  return std::string(kPh[static_cast<int>(l.phenomenon)]) + (l.complexity == Complexity::Simple ? "-S" : "-C");
}

GrammarPair parse_grammar_pair(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (fields.size() != 5) {
    throw Error(ErrorCode::InvalidArgument, "grammar pair needs 5 tab-separated fields, got " + std::to_string(fields.size()));
  }
  GrammarPair p{parse_case_label(fields[0]), fields[1], fields[2], fields[3], fields[4]};
  if (p.grammatical == p.ungrammatical) {
    throw Error(ErrorCode::InvalidArgument, "grammar pair sentences are identical");
  }
  return p;
}

std::vector<GrammarPair> read_grammar_pairs(const std::filesystem::path& path) {
  std::vector<GrammarPair> pairs;
  for (const auto& line : read_lines(path)) {
    if (line.empty() || line.front() == '#') continue;
    pairs.push_back(parse_grammar_pair(line));
  }
  return pairs;
}

SyntaxEvalResult targeted_syntactic_eval(const SentenceScorer& scorer, std::span<const GrammarPair> pairs) {
  SyntaxEvalResult result;
  for (const auto& p : pairs) {
    const double good = scorer(p.grammatical, p.grammatical_tree);
    const double bad = scorer(p.ungrammatical, p.ungrammatical_tree);
    CaseTally& t = result.at(p.label);
    ++t.total;
    if (good > bad) ++t.correct;
  }
  return result;
}

std::string syntax_table_tsv(const std::string& model_name, const SyntaxEvalResult& r) {
  std::ostringstream os;
  os << "Model\tSVA\tSVA\tRA\tRA\tNPI\tNPI\n";
  os << "\tS\tC\tS\tC\tS\tC\n";
  os << model_name;
  for (std::size_t ph = 0; ph < 3; ++ph) {
    for (std::size_t cx = 0; cx < 2; ++cx) {
      const CaseTally& t = r.tallies[ph][cx];
      os << '\t' << (t.total ? fmt(t.accuracy(), 2) : std::string("-"));
    }
  }
  os << '\n';
  return os.str();
}

SentenceScorer make_model_scorer(const Model& model, const Vocabulary& sentence_vocab,
                                 const Vocabulary& tree_vocab, Variant variant, int samples,
                                 std::uint64_t seed, std::optional<std::size_t> template_depth) {
  return [&model, &sentence_vocab, &tree_vocab, variant, samples, seed, template_depth](
             const std::string& sentence, const std::string& tree) {
    const PairedExample ex =
        numericalize(make_raw_pair(sentence, tree, template_depth), sentence_vocab, tree_vocab);
    return score_sentence(model, ex, variant, samples, seed).iwae;
  };
}

}  // namespace sivae
