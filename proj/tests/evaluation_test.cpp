#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sivae/error.hpp"
#include "sivae/evaluation.hpp"
#include "toy_corpus.hpp"

#ifndef SIVAE_DATA_DIR
#define SIVAE_DATA_DIR "data"
#endif

namespace sivae {
namespace {

const testing::ToyCorpus& corpus() {
  static const auto c = testing::make_toy_corpus(10, 5);
  return c;
}

ModelConfig small(Variant v, int latent = 4) {
  ModelConfig c;
  c.variant = v;
  c.sentence_vocab = corpus().sentence_vocab.size();
  c.tree_vocab = corpus().tree_vocab.size();
  c.embed = 8;
  c.hidden = 8;
  c.latent = latent;
  c.prior_hidden = 6;
  c.init_scale = 0.3;
  return c;
}

TEST(Reconstruction, UniformModelPerplexityIsVocabSize) {
  Model m(small(Variant::Conditional), 2);
  m.params().at("theta.dec_x.out.W").value.setZero();
  m.params().at("theta.dec_y.out.W").value.setZero();
  const auto r = reconstruction_metrics(m, corpus().data, {});
  EXPECT_NEAR(r.sentence_ppl(), corpus().sentence_vocab.size(), 1e-9 * corpus().sentence_vocab.size());
  EXPECT_NEAR(r.tree_ppl(), corpus().tree_vocab.size(), 1e-9 * corpus().tree_vocab.size());
}

TEST(Reconstruction, TokenCountsAndConsistency) {
  Model m(small(Variant::Independent), 3);
  EvalOptions o;
  o.variant = Variant::Independent;
  o.batch_size = 3;
  const auto r = reconstruction_metrics(m, corpus().data, o);
  std::int64_t s = 0, t = 0;
  for (const auto& ex : corpus().data.examples) {
    s += static_cast<std::int64_t>(ex.sentence.size()) - 1;
    t += static_cast<std::int64_t>(ex.tree.size()) - 1;
  }
  EXPECT_EQ(r.sentence_tokens, s);
  EXPECT_EQ(r.tree_tokens, t);
  EXPECT_EQ(r.examples, corpus().data.size());
  const double expected = std::exp(r.sentence_nll_total / static_cast<double>(r.sentence_tokens));
  EXPECT_NEAR(r.sentence_ppl(), expected, 1e-9 * expected);
  EXPECT_GE(r.sentence_nll(), 0.0);
  EXPECT_GE(r.kl_x(), 0.0);
  EXPECT_GE(r.kl_y(), 0.0);
  EXPECT_FALSE(r.warning);
}

TEST(Reconstruction, SingleTokenHandComputation) {
  Model m(small(Variant::Independent), 4);
  Dataset one;
  one.examples.push_back({{1, 5, 2}, {1, 4, 5, 2}});
  EvalOptions o;
  o.variant = Variant::Independent;
  o.use_posterior_mean = true;
  const auto r = reconstruction_metrics(m, one, o);

  const auto& ex = one.examples[0];
  const auto q_x = encode_sentence(m, ex.sentence);
  const auto q_y = encode_tree(m, ex.tree, std::nullopt, Variant::Independent);
  const std::vector<int> y_in{1, 4, 5}, x_in{1, 5};
  const auto tree = decode_tree(m, q_y.mean, y_in);
  const auto sent = decode_sentence(m, q_x.mean, tree.final_state, x_in, DecoderSetting::Standard);
  auto nll = [](const Matrix& logits, std::span<const int> targets) {
    double s = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto row = logits.row(static_cast<Eigen::Index>(t));
      s -= row(targets[t]) - std::log(row.array().exp().sum());
    }
    return s;
  };
  const std::vector<int> x_out{5, 2}, y_out{4, 5, 2};
  EXPECT_NEAR(r.sentence_nll_total, nll(sent.logits, x_out), 1e-10);
  EXPECT_NEAR(r.tree_nll_total, nll(tree.logits, y_out), 1e-10);
  EXPECT_NEAR(r.sentence_ppl(), std::exp(nll(sent.logits, x_out) / 2), 1e-9);
}

TEST(Reconstruction, SettingMismatchWarns) {
  ModelConfig c = small(Variant::Conditional);
  c.setting = DecoderSetting::Inputless;
  Model m(c, 1);
  EvalOptions o;
  o.setting = DecoderSetting::Standard;
  const auto r = reconstruction_metrics(m, corpus().data, o);
  ASSERT_TRUE(r.warning);
  EXPECT_NE(r.warning->find("inputless"), std::string::npos);
  o.setting = DecoderSetting::Inputless;
  EXPECT_FALSE(reconstruction_metrics(m, corpus().data, o).warning);
}

TEST(Reconstruction, InputlessScoresDifferFromStandard) {
  Model m(small(Variant::Conditional), 6);
  EvalOptions o;
  const auto standard = reconstruction_metrics(m, corpus().data, o);
  o.setting = DecoderSetting::Inputless;
  const auto inputless = reconstruction_metrics(m, corpus().data, o);
  EXPECT_NE(standard.sentence_nll_total, inputless.sentence_nll_total);
  EXPECT_NE(standard.tree_nll_total, inputless.tree_nll_total);
}

TEST(Reconstruction, TableRowLayout) {
  ReconstructionReport r;
  r.examples = 2;
  r.sentence_tokens = 10;
  r.tree_tokens = 20;
  r.sentence_nll_total = 10 * std::log(98.0);
  r.tree_nll_total = 20 * std::log(1.6);
  r.kl_x_total = 10;
  r.kl_y_total = 1;
  EXPECT_EQ(reconstruction_header_tsv(), "Model\tSetting\tPPL\tNLL\tKL");
  EXPECT_EQ(reconstruction_row_tsv("SIVAE-i", r), "SIVAE-i\tstandard\t98.00(1.60)\t22.92(4.70)\t5.00(0.50)");
}

TEST(ScoreSentence, SingleSampleIdentity) {
  for (Variant v : {Variant::Conditional, Variant::Independent}) {
    Model m(small(v), 7);
    const auto& ex = corpus().data.examples[1];
    const auto s = score_sentence(m, ex, v, 1, 11);
    EXPECT_EQ(s.iwae, s.elbo_estimate);
    Rng rng(11);
    const std::vector<PairedExample> one{ex};
    const auto lw = importance_log_weights(m, make_batch(one), v, draw_noise(rng, 1, 4));
    EXPECT_NEAR(s.iwae, lw(0), 1e-12);
  }
}

TEST(ScoreSentence, DeterministicForSeed) {
  Model m(small(Variant::Conditional), 7);
  const auto& ex = corpus().data.examples[2];
  EXPECT_EQ(score_sentence(m, ex, Variant::Conditional, 70, 3).iwae, score_sentence(m, ex, Variant::Conditional, 70, 3).iwae);
  EXPECT_THROW(score_sentence(m, ex, Variant::Conditional, 0, 3), Error);
}

TEST(ScoreSentence, PaddingInvariance) {
  Model m(small(Variant::Conditional), 8);
  const auto& a = corpus().data.examples[0];
  PairedExample longer = a;
  longer.sentence.insert(longer.sentence.begin() + 1, 8, 5);
  longer.tree.insert(longer.tree.begin() + 1, 4, 4);
  longer.tree.insert(longer.tree.end() - 1, 4, corpus().tree_vocab.id(")"));
  Rng rng(1);
  const auto noise = draw_noise(rng, 2, 4);
  const std::vector<PairedExample> both{a, longer};
  const auto batched = importance_log_weights(m, make_batch(both), Variant::Conditional, noise);
  LatentNoise solo{noise.x.topRows(1), noise.y.topRows(1)};
  const std::vector<PairedExample> one{a};
  const auto single = importance_log_weights(m, make_batch(one), Variant::Conditional, solo);
  EXPECT_NEAR(batched(0), single(0), 1e-10);
}

TEST(ScoreSentence, IwaeGrowsWithSamplesOnAverage) {
  Model m(small(Variant::Independent), 9);
  const auto& ex = corpus().data.examples[3];
  double k1 = 0, k5 = 0, k25 = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    k1 += score_sentence(m, ex, Variant::Independent, 1, seed).iwae;
    k5 += score_sentence(m, ex, Variant::Independent, 5, seed).iwae;
    k25 += score_sentence(m, ex, Variant::Independent, 25, seed).iwae;
  }
  EXPECT_LE(k1, k5);
  EXPECT_LE(k5, k25);
}

TEST(ScoreSentence, MatchesQuadratureOnScalarLatent) {
  for (Variant v : {Variant::Independent, Variant::Conditional}) {
    ModelConfig c = small(v, 1);
    c.init_scale = 0.2;
    Model m(c, 12);
    const PairedExample ex{{1, 5, 2}, {1, 4, corpus().tree_vocab.id(")"), 2}};
    const double exact = testing::quadrature_log_marginal(m, ex, v, 160, 7.0);
    const double iwae = score_sentence(m, ex, v, 4000, 5).iwae;
    EXPECT_LT(std::abs(iwae - exact), 0.02 * std::abs(exact)) << "iwae " << iwae << " exact " << exact;
  }
}

TEST(CaseLabels, ParseAndPrint) {
  EXPECT_EQ(to_string(parse_case_label("SVA-S")), "SVA-S");
  EXPECT_EQ(to_string(parse_case_label("NPI-complex")), "NPI-C");
  EXPECT_THROW(parse_case_label("XYZ-S"), Error);
  EXPECT_THROW(parse_case_label("SVA"), Error);
  EXPECT_THROW(parse_case_label("RA-M"), Error);
}

TEST(GrammarPairs, ShippedFile) {
  const auto pairs = read_grammar_pairs(std::string(SIVAE_DATA_DIR) + "/grammar_pairs.tsv");
  ASSERT_FALSE(pairs.empty());
  bool found = false;
  for (const auto& p : pairs) {
    EXPECT_NE(p.grammatical, p.ungrammatical);
    if (p.grammatical == "the author laughs ." && p.ungrammatical == "the author laugh .") {
      EXPECT_EQ(to_string(p.label), "SVA-S");
      found = true;
    }
  }
  EXPECT_TRUE(found);
  EXPECT_THROW(parse_grammar_pair("SVA-S\ta\ta\t(S)\t(S)"), Error);
  EXPECT_THROW(parse_grammar_pair("SVA-S\ta\tb"), Error);
}

TEST(SyntaxEval, OracleAndInverted) {
  const auto pairs = testing::synthetic_pairs(600, 1);
  std::set<std::string> good;
  for (const auto& p : pairs) good.insert(p.grammatical);
  const SentenceScorer oracle = [&](const std::string& s, const std::string&) { return good.count(s) ? 1.0 : 0.0; };
  const SentenceScorer inverted = [&](const std::string& s, const std::string& t) { return -oracle(s, t); };
  const auto ok = targeted_syntactic_eval(oracle, pairs);
  const auto bad = targeted_syntactic_eval(inverted, pairs);
  for (const auto& row : ok.tallies) {
    for (const auto& t : row) {
      EXPECT_EQ(t.total, 100u);
      EXPECT_EQ(t.accuracy(), 1.0);
    }
  }
  for (const auto& row : bad.tallies) {
    for (const auto& t : row) EXPECT_EQ(t.accuracy(), 0.0);
  }
}

TEST(SyntaxEval, TiesCountAsFailures) {
  const auto pairs = testing::synthetic_pairs(12, 2);
  const auto r = targeted_syntactic_eval([](const std::string&, const std::string&) { return 0.5; }, pairs);
  for (const auto& row : r.tallies) {
    for (const auto& t : row) EXPECT_EQ(t.correct, 0u);
  }
}

TEST(SyntaxEval, RandomScorerNearChance) {
  const auto pairs = testing::synthetic_pairs(10000, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  const auto r = targeted_syntactic_eval([&](const std::string&, const std::string&) { return u(rng); }, pairs);
  std::size_t correct = 0, total = 0;
  for (const auto& row : r.tallies) {
    for (const auto& t : row) {
      correct += t.correct;
      total += t.total;
    }
  }
  EXPECT_EQ(total, 10000u);
  const double acc = static_cast<double>(correct) / static_cast<double>(total);
  EXPECT_GE(acc, 0.47);
  EXPECT_LE(acc, 0.53);
}

TEST(SyntaxEval, TableLayout) {
  SyntaxEvalResult r;
  r.at({Phenomenon::SVA, Complexity::Simple}) = {3, 4};
  r.at({Phenomenon::NPI, Complexity::Complex}) = {1, 2};
  EXPECT_EQ(syntax_table_tsv("SIVAE-c", r),
            "Model\tSVA\tSVA\tRA\tRA\tNPI\tNPI\n"
            "\tS\tC\tS\tC\tS\tC\n"
            "SIVAE-c\t0.75\t-\t-\t-\t-\t0.50\n");
}

TEST(SyntaxEval, ModelScorerRunsOnShippedPairs) {
  const auto pairs = read_grammar_pairs(std::string(SIVAE_DATA_DIR) + "/grammar_pairs.tsv");
  Model m(small(Variant::Conditional), 3);
  const auto scorer = make_model_scorer(m, corpus().sentence_vocab, corpus().tree_vocab, Variant::Conditional, 4, 1);
  const auto r = targeted_syntactic_eval(scorer, pairs);
  std::size_t total = 0;
  for (const auto& row : r.tallies) {
    for (const auto& t : row) total += t.total;
  }
  EXPECT_EQ(total, pairs.size());
  EXPECT_TRUE(std::isfinite(scorer(pairs[0].grammatical, pairs[0].grammatical_tree)));
}

}  // namespace
}  // namespace sivae
