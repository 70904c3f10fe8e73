#include "sivae/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "sivae/error.hpp"

namespace sivae {

namespace {

constexpr const char* kReservedTokens[] = {"<pad>", "<s>", "</s>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) add(t);
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw Error(ErrorCode::InvalidArgument, "vocabulary id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : tokens_) {
    for (unsigned char ch : t) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= 1099511628211ull;
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_lines(path, tokens_); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.size() < static_cast<std::size_t>(kReserved)) {
    throw Error(ErrorCode::Io, "vocabulary file too short: " + path.string());
  }
  for (int i = 0; i < kReserved; ++i) {
    if (lines[static_cast<std::size_t>(i)] != kReservedTokens[i]) {
      throw Error(ErrorCode::Io, "vocabulary file does not start with the reserved tokens: " +
                                     path.string());
    }
  }
  Vocabulary vocab;
  for (std::size_t i = kReserved; i < lines.size(); ++i) {
    if (vocab.add(lines[i]) != static_cast<int>(i)) {
      throw Error(ErrorCode::Io, "duplicate vocabulary entry '" + lines[i] + "'");
    }
  }
  return vocab;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> streams, int min_count) {
  std::map<std::string, long> counts;
  for (const auto& stream : streams) {
    for (const auto& t : stream) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [token, count] : counts) {
    if (count >= min_count) kept.emplace_back(token, count);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [token, count] : kept) vocab.add(token);
  return vocab;
}

std::vector<int> tree_token_ids(const TreeSequence& seq, Vocabulary& vocab, TagPolicy policy) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (const auto& token : seq) {
    if (auto id = vocab.find(token)) {
      out.push_back(*id);
      continue;
    }
    switch (policy) {
      case TagPolicy::Extend: out.push_back(vocab.add(token)); break;
      case TagPolicy::Frozen: throw Error(ErrorCode::UnknownTag, "tag token '" + token + "'");
      case TagPolicy::MapToUnk: out.push_back(Vocabulary::kUnk); break;
    }
  }
  return out;
}

std::vector<int> tree_token_ids(const TreeSequence& seq, const Vocabulary& vocab) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (const auto& token : seq) {
    auto id = vocab.find(token);
    if (!id) throw Error(ErrorCode::UnknownTag, "tag token '" + token + "'");
    out.push_back(*id);
  }
  return out;
}

std::vector<std::string> tokenize_sentence(std::string_view line) { return split_tokens(line); }

TreeSequence tree_line_to_sequence(std::string_view tree_line,
                                   std::optional<std::size_t> template_depth) {
  ConstituencyTree tree;
  try {
    tree = parse_bracketed(tree_line, ParseOptions{.unwrap_unlabeled_root = true});
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedTree, e.what());
  }
  const ConstituencyTree stripped = strip_leaves(tree);
  return template_depth ? simplify_template(stripped, *template_depth) : linearize(stripped);
}

RawPair make_raw_pair(std::string_view sentence_line, std::string_view tree_line,
                      std::optional<std::size_t> template_depth) {
  RawPair raw{tokenize_sentence(sentence_line), tree_line_to_sequence(tree_line, template_depth)};
  if (raw.words.empty()) throw Error(ErrorCode::EmptySequence, "empty sentence");
  return raw;
}

std::vector<int> numericalize_sentence(std::span<const std::string> words, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(Vocabulary::kBos);
  for (const auto& w : words) ids.push_back(vocab.id(w));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

PairedExample numericalize(const RawPair& raw, const Vocabulary& sentence_vocab,
                           const Vocabulary& tree_vocab) {
  if (raw.words.empty()) throw Error(ErrorCode::EmptySequence, "empty sentence");
  if (const auto check = validate_sequence(raw.tree); !check) {
    throw Error(ErrorCode::MalformedTree,
                "tree sequence invalid at token " + std::to_string(check.first_violation));
  }
  PairedExample ex;
  ex.sentence = numericalize_sentence(raw.words, sentence_vocab);
  ex.tree.reserve(raw.tree.size() + 2);
  ex.tree.push_back(Vocabulary::kBos);
  for (const auto& t : raw.tree) ex.tree.push_back(tree_vocab.id(t));
  ex.tree.push_back(Vocabulary::kEos);
  return ex;
}

PairedExample numericalize(std::string_view sentence_line, std::string_view tree_line,
                           const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab) {
  return numericalize(make_raw_pair(sentence_line, tree_line), sentence_vocab, tree_vocab);
}

std::vector<std::string> denumericalize(std::span<const int> ids, const Vocabulary& vocab,
                                        bool strip_specials) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (strip_specials && (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos)) {
      continue;
    }
    out.push_back(vocab.token(id));
  }
  return out;
}

PaddedIds pad(std::span<const std::vector<int>> sequences) {
  PaddedIds p;
  p.rows = static_cast<int>(sequences.size());
  for (const auto& s : sequences) p.width = std::max(p.width, static_cast<int>(s.size()));
  p.ids.assign(static_cast<std::size_t>(p.rows) * p.width, Vocabulary::kPad);
  p.lengths.reserve(sequences.size());
  for (int r = 0; r < p.rows; ++r) {
    const auto& s = sequences[static_cast<std::size_t>(r)];
    std::copy(s.begin(), s.end(), p.ids.begin() + static_cast<std::ptrdiff_t>(r) * p.width);
    p.lengths.push_back(static_cast<int>(s.size()));
  }
  return p;
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<std::vector<int>> sents;
  std::vector<std::vector<int>> trees;
  sents.reserve(indices.size());
  trees.reserve(indices.size());
  for (std::size_t i : indices) {
    sents.push_back(dataset.examples.at(i).sentence);
    trees.push_back(dataset.examples.at(i).tree);
  }
  Batch b{pad(sents), pad(trees), {indices.begin(), indices.end()}};
  return b;
}

Batch make_batch(std::span<const PairedExample> examples) {
  std::vector<std::vector<int>> sents;
  std::vector<std::vector<int>> trees;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    sents.push_back(examples[i].sentence);
    trees.push_back(examples[i].tree);
    ids.push_back(i);
  }
  return Batch{pad(sents), pad(trees), std::move(ids)};
}

std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, std::uint64_t seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

std::size_t num_batches(std::size_t n, int batch_size) {
  return (n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
}

BatchIterator::BatchIterator(const Dataset& dataset, int batch_size, bool shuffle,
                             std::uint64_t seed, std::uint64_t epoch)
    : dataset_(dataset),
      batch_size_(batch_size),
      order_(epoch_order(dataset.size(), shuffle, seed, epoch)) {
  if (batch_size <= 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
}

Batch BatchIterator::next() {
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  std::span<const std::size_t> indices(order_.data() + cursor_, end - cursor_);
  cursor_ = end;
  return make_batch(dataset_, indices);
}

std::size_t BatchIterator::num_batches() const { return sivae::num_batches(order_.size(), batch_size_); }

void BatchIterator::skip(std::size_t batches) {
  cursor_ = std::min(order_.size(), cursor_ + batches * static_cast<std::size_t>(batch_size_));
}

CorpusStats dataset_stats(std::string dataset_name, std::span<const RawPair> train,
                          std::span<const RawPair> test, std::span<const RawPair> valid,
                          const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab) {
  CorpusStats s;
  s.dataset = std::move(dataset_name);
  s.train = train.size();
  s.test = test.size();
  s.valid = valid.size();
  double sum_s = 0;
  double sum_t = 0;
  std::size_t n = 0;
  for (auto split : {train, test, valid}) {
    for (const auto& p : split) {
      sum_s += static_cast<double>(p.words.size());
      sum_t += static_cast<double>(p.tree.size());
      s.max_s = std::max(s.max_s, p.words.size());
      s.max_t = std::max(s.max_t, p.tree.size());
      ++n;
    }
  }
  if (n > 0) {
    s.ave_s = sum_s / static_cast<double>(n);
    s.ave_t = sum_t / static_cast<double>(n);
  }
  s.voc_s = sentence_vocab.content_size();
  s.voc_t = tree_vocab.content_size();
  return s;
}

std::string stats_header_tsv() {
  return "Dataset\tTrain\tTest\tValid\tAve_s\tMax_s\tVoc_s\tTree Type\tAve_t\tMax_t\tVoc_t";
}

std::string stats_row_tsv(const CorpusStats& s) {
  std::ostringstream os;
  os << s.dataset << '\t' << s.train << '\t' << s.test << '\t' << s.valid << '\t'
     << std::lround(s.ave_s) << '\t' << s.max_s << '\t' << s.voc_s << '\t' << s.tree_type << '\t'
     << std::lround(s.ave_t) << '\t' << s.max_t << '\t' << s.voc_t;
  return os.str();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace sivae
