#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sivae/corpus.hpp"
#include "sivae/model.hpp"
#include "sivae/objectives.hpp"
#include "sivae/treebank.hpp"

namespace sivae {

enum class DecodeMode { Greedy, Sample };

std::string_view to_string(DecodeMode m);
DecodeMode parse_decode_mode(std::string_view text);

struct DecodeOptions {
  DecodeMode mode = DecodeMode::Greedy;
  double temperature = 1.0;  // logit divisor, sample mode only
  int max_tree_len = 300;
  int max_sent_len = 150;
  std::uint64_t seed = 1;
  bool record_logits = false;

  void validate() const;
};

// Decoder-side vocabularies; tree tokens are needed to track bracket depth.
struct Vocabularies {
  const Vocabulary& sentence;
  const Vocabulary& tree;
};

struct Generation {
  std::vector<int> tree_ids;      // without BOS/EOS
  std::vector<int> sentence_ids;  // without BOS/EOS
  TreeSequence tree;
  std::vector<std::string> sentence;
  bool tree_valid = false;
  // Per-step logits when DecodeOptions::record_logits is set.
  std::vector<Vector> tree_logits;
  std::vector<Vector> sentence_logits;

  std::string sentence_text() const;
  std::string tree_text() const;
};

// Decodes a tree from z_y, then a sentence from z_x and the tree decoder's
// final state. Tree decoding stops at EOS, at max_tree_len, or when bracket
// depth returns to zero (the closing token is then fed once more).
Generation decode_latents(const Model& model, const Vocabularies& vocabs, const LatentVector& z_x,
                          const LatentVector& z_y, const DecodeOptions& opts, Rng& rng);

std::vector<Generation> generate(const Model& model, const Vocabularies& vocabs, Variant variant,
                                 std::size_t n, const DecodeOptions& opts);

// sentence: raw text; template_tokens: e.g. split_tokens("(S(NP)(VP)(.))").
// Throws MalformedTemplate for invalid templates, ModeMismatch for a conditional model.
Generation paraphrase_i(const Model& model, const Vocabularies& vocabs, const std::string& sentence,
                        const TreeSequence& template_tokens, const DecodeOptions& opts);

// Temperature scales the conditional prior's standard deviation; 0 uses its mean.
std::vector<Generation> paraphrase_c(const Model& model, const Vocabularies& vocabs,
                                     const std::string& sentence, double temperature, std::size_t n,
                                     std::uint64_t seed, const DecodeOptions& opts = {});

// Greedy decode of a sentence latent; z_y is the conditional prior mean (zero
// for the independent variant).
Generation decode_sentence_latent(const Model& model, const Vocabularies& vocabs,
                                  const LatentVector& z_x, const DecodeOptions& opts = {});

std::vector<Generation> interpolate_latents(const Model& model, const Vocabularies& vocabs,
                                            const LatentVector& z_a, const LatentVector& z_b,
                                            int steps, const DecodeOptions& opts = {});

// Endpoints are the posterior means of the two sentences.
std::vector<Generation> interpolate(const Model& model, const Vocabularies& vocabs,
                                    const std::string& sentence_a, const std::string& sentence_b,
                                    int steps, const DecodeOptions& opts = {});

// Posterior mean of a raw sentence under the sentence encoder.
LatentVector sentence_latent(const Model& model, const Vocabulary& sentence_vocab,
                             const std::string& sentence);

// Line-delimited JSON record: tree, sentence, valid.
std::string to_record(const Generation& g);

}  // namespace sivae
