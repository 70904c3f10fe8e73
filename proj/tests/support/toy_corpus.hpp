#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sivae/corpus.hpp"

namespace sivae::testing {

// Small synthetic grammar: sentences of at most 10 tokens with bracketed
// parses that include the words.
struct ToyLines {
  std::vector<std::string> sentences;
  std::vector<std::string> trees;
};

ToyLines make_toy_lines(std::size_t n, std::uint64_t seed);

struct ToyCorpus {
  ToyLines lines;
  std::vector<RawPair> raw;
  Vocabulary sentence_vocab;
  Vocabulary tree_vocab;
  Dataset data;
};

ToyCorpus make_toy_corpus(std::size_t n, std::uint64_t seed,
                          std::optional<std::size_t> template_depth = std::nullopt);

// Random labeled tree with at most max_nodes nodes, as a bracketed string
// without words.
std::string random_tree_text(std::uint64_t seed, std::size_t max_nodes);

}  // namespace sivae::testing
