#pragma once

// Vocabularies, paired (sentence, tree-sequence) examples, batching and
// corpus statistics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sivae/treebank.hpp"

namespace sivae {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  int add(const std::string& token);
  // Returns kUnk for unknown tokens.
  int id(std::string_view token) const;
  std::optional<int> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  const std::string& token(int id) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  // Entries excluding the four reserved tokens.
  int content_size() const { return size() - kReserved; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // FNV-1a over the newline-joined token list.
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::string hash_hex(std::uint64_t h);

// Tokens with count < min_count are left out (they numericalize to UNK).
// Ordering is by descending count, ties broken lexicographically.
Vocabulary build_vocab(std::span<const std::vector<std::string>> streams, int min_count);

enum class TagPolicy {
  Extend,      // unseen tags are appended to the vocabulary
  Frozen,      // unseen tags raise UnknownTag
  MapToUnk,    // unseen tags become UNK
};

std::vector<int> tree_token_ids(const TreeSequence& seq, Vocabulary& vocab, TagPolicy policy);
std::vector<int> tree_token_ids(const TreeSequence& seq, const Vocabulary& vocab);

std::vector<std::string> tokenize_sentence(std::string_view line);

// A sentence and its linearized tree before numericalization.
struct RawPair {
  std::vector<std::string> words;
  TreeSequence tree;
};

struct PairedExample {
  std::vector<int> sentence;  // BOS ... EOS over the sentence vocabulary
  std::vector<int> tree;      // BOS ... EOS over the tree vocabulary
};

struct Dataset {
  std::vector<PairedExample> examples;
  std::size_t size() const { return examples.size(); }
};

// Parses a bracketed tree line, strips the words and linearizes it. When
// template_depth is set, the tree is truncated to that depth first.
// Failures are reported as MalformedTree.
TreeSequence tree_line_to_sequence(std::string_view tree_line,
                                   std::optional<std::size_t> template_depth = std::nullopt);

RawPair make_raw_pair(std::string_view sentence_line, std::string_view tree_line,
                      std::optional<std::size_t> template_depth = std::nullopt);

PairedExample numericalize(const RawPair& raw, const Vocabulary& sentence_vocab,
                           const Vocabulary& tree_vocab);
PairedExample numericalize(std::string_view sentence_line, std::string_view tree_line,
                           const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab);

std::vector<int> numericalize_sentence(std::span<const std::string> words, const Vocabulary& vocab);
std::vector<std::string> denumericalize(std::span<const int> ids, const Vocabulary& vocab,
                                        bool strip_specials = true);

// Row-major padded id matrix.
struct PaddedIds {
  int rows = 0;
  int width = 0;
  std::vector<int> ids;
  std::vector<int> lengths;

  int at(int row, int col) const { return ids[static_cast<std::size_t>(row) * width + col]; }
  int& at(int row, int col) { return ids[static_cast<std::size_t>(row) * width + col]; }
};

PaddedIds pad(std::span<const std::vector<int>> sequences);

struct Batch {
  PaddedIds sentence;
  PaddedIds tree;
  std::vector<std::size_t> example_ids;
  int size() const { return sentence.rows; }
};

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);
Batch make_batch(std::span<const PairedExample> examples);

// Example order for one epoch. Deterministic in (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, std::uint64_t seed,
                                     std::uint64_t epoch);

class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, int batch_size, bool shuffle, std::uint64_t seed,
                std::uint64_t epoch = 0);

  bool done() const { return cursor_ >= order_.size(); }
  Batch next();
  std::size_t num_batches() const;
  // Skips ahead by whole batches; used on resume.
  void skip(std::size_t batches);

 private:
  const Dataset& dataset_;
  int batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

std::size_t num_batches(std::size_t n, int batch_size);

struct SplitCounts {
  std::string name;
  std::size_t count = 0;
};

struct CorpusStats {
  std::string dataset;
  std::string tree_type = "Golden";
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t valid = 0;
  double ave_s = 0;
  std::size_t max_s = 0;
  int voc_s = 0;
  double ave_t = 0;
  std::size_t max_t = 0;
  int voc_t = 0;
};

// Lengths exclude BOS/EOS. Averages and maxima run over every supplied split.
CorpusStats dataset_stats(std::string dataset_name, std::span<const RawPair> train,
                          std::span<const RawPair> test, std::span<const RawPair> valid,
                          const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab);

std::string stats_header_tsv();
std::string stats_row_tsv(const CorpusStats& stats);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);

}  // namespace sivae
