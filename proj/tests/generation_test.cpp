#include <gtest/gtest.h>

#include "sivae/error.hpp"
#include "sivae/generation.hpp"
#include "toy_corpus.hpp"

namespace sivae {
namespace {

const testing::ToyCorpus& corpus() {
  static const auto c = testing::make_toy_corpus(12, 9, 2);
  return c;
}

Vocabularies vocabs() { return {corpus().sentence_vocab, corpus().tree_vocab}; }

Model make_model(Variant v, DecoderSetting s = DecoderSetting::Standard, std::uint64_t seed = 4) {
  ModelConfig c;
  c.variant = v;
  c.setting = s;
  c.sentence_vocab = corpus().sentence_vocab.size();
  c.tree_vocab = corpus().tree_vocab.size();
  c.embed = 8;
  c.hidden = 10;
  c.latent = 4;
  c.prior_hidden = 6;
  c.init_scale = 0.5;
  return Model(c, seed);
}

DecodeOptions short_opts() {
  DecodeOptions o;
  o.max_tree_len = 40;
  o.max_sent_len = 20;
  return o;
}

TEST(DecodeOptions, Validation) {
  DecodeOptions o;
  EXPECT_NO_THROW(o.validate());
  o.temperature = 0;
  EXPECT_THROW(o.validate(), Error);
  o.temperature = 1;
  o.max_tree_len = 1;
  EXPECT_THROW(o.validate(), Error);
  EXPECT_EQ(parse_decode_mode("sample"), DecodeMode::Sample);
  EXPECT_THROW(parse_decode_mode("beam"), Error);
}

TEST(Generate, GreedyIsDeterministic) {
  const Model m = make_model(Variant::Conditional);
  const auto a = generate(m, vocabs(), Variant::Conditional, 5, short_opts());
  const auto b = generate(m, vocabs(), Variant::Conditional, 5, short_opts());
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tree_ids, b[i].tree_ids);
    EXPECT_EQ(a[i].sentence_ids, b[i].sentence_ids);
  }
}

TEST(Generate, ZeroCountIsEmpty) {
  const Model m = make_model(Variant::Independent);
  EXPECT_TRUE(generate(m, vocabs(), Variant::Independent, 0, short_opts()).empty());
}

TEST(Generate, ConditionalNeedsConditionalModel) {
  const Model m = make_model(Variant::Independent);
  try {
    generate(m, vocabs(), Variant::Conditional, 1, short_opts());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModeMismatch);
  }
}

TEST(Generate, ColdSamplingMatchesGreedy) {
  const Model m = make_model(Variant::Independent);
  Rng latent_rng(3);
  const LatentVector z_x = standard_normal(latent_rng, 4, 1);
  const LatentVector z_y = standard_normal(latent_rng, 4, 1);
  Rng unused(0);
  const auto greedy = decode_latents(m, vocabs(), z_x, z_y, short_opts(), unused);
  DecodeOptions cold = short_opts();
  cold.mode = DecodeMode::Sample;
  cold.temperature = 1e-8;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto s = decode_latents(m, vocabs(), z_x, z_y, cold, rng);
    EXPECT_EQ(s.tree_ids, greedy.tree_ids);
    EXPECT_EQ(s.sentence_ids, greedy.sentence_ids);
  }
}

TEST(Generate, ValidityFlagAgreesWithValidator) {
  const Model m = make_model(Variant::Independent, DecoderSetting::Standard, 8);
  DecodeOptions o = short_opts();
  o.mode = DecodeMode::Sample;
  for (const auto& g : generate(m, vocabs(), Variant::Independent, 30, o)) {
    EXPECT_EQ(g.tree_valid, validate_sequence(g.tree).valid);
    EXPECT_LE(g.tree_ids.size(), 40u);
    EXPECT_LE(g.sentence_ids.size(), 20u);
    EXPECT_EQ(g.tree.size(), g.tree_ids.size());
  }
}

TEST(Generate, RecordedLogitsMatchTeacherForcing) {
  for (DecoderSetting s : {DecoderSetting::Standard, DecoderSetting::Inputless}) {
    const Model m = make_model(Variant::Independent, s, 5);
    Rng latent_rng(6);
    const LatentVector z_x = standard_normal(latent_rng, 4, 1);
    const LatentVector z_y = standard_normal(latent_rng, 4, 1);
    DecodeOptions o = short_opts();
    o.mode = DecodeMode::Sample;
    o.record_logits = true;
    Rng rng(2);
    const auto g = decode_latents(m, vocabs(), z_x, z_y, o, rng);

    std::vector<int> y_in{Vocabulary::kBos};
    y_in.insert(y_in.end(), g.tree_ids.begin(), g.tree_ids.end());
    const auto tree = decode_tree(m, z_y, y_in, s);
    // The tree loop ends either on EOS (logits for every input) or by feeding
    // the last token once more without recording.
    ASSERT_GE(tree.logits.rows(), static_cast<Eigen::Index>(g.tree_logits.size()));
    for (std::size_t t = 0; t < g.tree_logits.size(); ++t) {
      EXPECT_LT((tree.logits.row(static_cast<Eigen::Index>(t)).transpose() - g.tree_logits[t]).norm(), 1e-10);
    }

    std::vector<int> x_in{Vocabulary::kBos};
    x_in.insert(x_in.end(), g.sentence_ids.begin(), g.sentence_ids.end());
    const auto sent = decode_sentence(m, z_x, tree.final_state, x_in, s);
    ASSERT_EQ(g.sentence_logits.size(), std::min<std::size_t>(x_in.size(), 20));
    for (std::size_t t = 0; t < g.sentence_logits.size(); ++t) {
      EXPECT_LT((sent.logits.row(static_cast<Eigen::Index>(t)).transpose() - g.sentence_logits[t]).norm(), 1e-10);
    }
  }
}

TEST(ParaphraseI, RejectsMalformedTemplate) {
  const Model m = make_model(Variant::Independent);
  try {
    paraphrase_i(m, vocabs(), "the dog runs .", split_tokens("(S (NP ) (VP )"), short_opts());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedTemplate);
  }
}

TEST(ParaphraseI, AcceptsQuestionTemplate) {
  const auto tmpl = split_tokens("( SBARQ ( NP ) ( VP ) ( , ) ( SQ ) ( ? ) )");
  ASSERT_TRUE(validate_sequence(tmpl).valid);
  try {
    paraphrase_i(make_model(Variant::Independent), vocabs(), "the dog runs .", tmpl, short_opts());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownTag);
  }

  Vocabulary tree_vocab = corpus().tree_vocab;
  tree_token_ids(tmpl, tree_vocab, TagPolicy::Extend);
  ModelConfig c = make_model(Variant::Independent).config();
  c.tree_vocab = tree_vocab.size();
  const Model m(c, 2);
  const Vocabularies v{corpus().sentence_vocab, tree_vocab};
  const auto g = paraphrase_i(m, v, "the dog runs .", tmpl, short_opts());
  EXPECT_EQ(g.tree_valid, validate_sequence(g.tree).valid);
  EXPECT_EQ(g.sentence_ids, paraphrase_i(m, v, "the dog runs .", tmpl, short_opts()).sentence_ids);
}

TEST(ParaphraseI, NeedsIndependentModel) {
  const Model m = make_model(Variant::Conditional);
  try {
    paraphrase_i(m, vocabs(), "the dog runs .", split_tokens("(S (NP ) (VP ) (. ) )"), short_opts());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModeMismatch);
  }
}

TEST(ParaphraseC, ZeroTemperatureGivesIdenticalOutputs) {
  const Model m = make_model(Variant::Conditional);
  const auto out = paraphrase_c(m, vocabs(), corpus().lines.sentences[0], 0.0, 5, 3, short_opts());
  ASSERT_EQ(out.size(), 5u);
  for (const auto& g : out) {
    EXPECT_EQ(g.tree_ids, out[0].tree_ids);
    EXPECT_EQ(g.sentence_ids, out[0].sentence_ids);
  }
}

TEST(ParaphraseC, SeedReproducible) {
  const Model m = make_model(Variant::Conditional);
  const auto a = paraphrase_c(m, vocabs(), corpus().lines.sentences[1], 2.0, 6, 17, short_opts());
  const auto b = paraphrase_c(m, vocabs(), corpus().lines.sentences[1], 2.0, 6, 17, short_opts());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_record(a[i]), to_record(b[i]));
  EXPECT_THROW(paraphrase_c(m, vocabs(), corpus().lines.sentences[1], -1.0, 1, 1, short_opts()), Error);
}

TEST(Interpolate, EndpointsAreDirectDecodes) {
  const Model m = make_model(Variant::Conditional);
  const std::string a = corpus().lines.sentences[2];
  const std::string b = corpus().lines.sentences[3];
  const auto path = interpolate(m, vocabs(), a, b, 5, short_opts());
  ASSERT_EQ(path.size(), 5u);
  const auto da = decode_sentence_latent(m, vocabs(), sentence_latent(m, corpus().sentence_vocab, a), short_opts());
  const auto db = decode_sentence_latent(m, vocabs(), sentence_latent(m, corpus().sentence_vocab, b), short_opts());
  EXPECT_EQ(path.front().sentence_ids, da.sentence_ids);
  EXPECT_EQ(path.front().tree_ids, da.tree_ids);
  EXPECT_EQ(path.back().sentence_ids, db.sentence_ids);
  EXPECT_EQ(interpolate(m, vocabs(), a, b, 2, short_opts()).size(), 2u);
  EXPECT_THROW(interpolate(m, vocabs(), a, b, 1, short_opts()), Error);
}

TEST(Records, JsonLayout) {
  Generation g;
  g.tree = split_tokens("(S (NP ) )");
  g.sentence = {"a", "b"};
  g.tree_valid = true;
  EXPECT_EQ(to_record(g), R"j({"tree":"(S (NP ) )","sentence":"a b","valid":true})j");
}

}  // namespace
}  // namespace sivae
