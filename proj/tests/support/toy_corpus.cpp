#include "toy_corpus.hpp"

#include <random>
#include <set>

namespace sivae::testing {

namespace {

using Rng = std::mt19937_64;

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

struct Phrase {
  std::vector<std::string> words;
  std::string tree;
};

const std::vector<std::string> kDet = {"the", "a"};
const std::vector<std::string> kNoun = {"cat", "dog", "bird", "man", "woman", "child"};
const std::vector<std::string> kAdj = {"big", "small", "red"};
const std::vector<std::string> kIntrans = {"sleeps", "runs", "laughs"};
const std::vector<std::string> kTrans = {"sees", "likes", "chases"};
const std::vector<std::string> kBare = {"see", "like", "chase"};
const std::vector<std::string> kPrep = {"near", "with"};
const std::vector<std::string> kAdv = {"often", "never"};

Phrase noun_phrase(Rng& rng, bool adjective) {
  Phrase p;
  const std::string& d = pick(kDet, rng);
  const std::string& n = pick(kNoun, rng);
  if (adjective) {
    const std::string& a = pick(kAdj, rng);
    p.words = {d, a, n};
    p.tree = "(NP (DT " + d + ") (JJ " + a + ") (NN " + n + "))";
  } else {
    p.words = {d, n};
    p.tree = "(NP (DT " + d + ") (NN " + n + "))";
  }
  return p;
}

void append(std::vector<std::string>& out, const std::vector<std::string>& words) {
  out.insert(out.end(), words.begin(), words.end());
}

std::pair<std::string, std::string> toy_example(Rng& rng) {
  std::vector<std::string> w;
  std::string t;
  std::string punct = ".";
  const int form = std::uniform_int_distribution<int>(0, 5)(rng);
  const Phrase subj = noun_phrase(rng, std::bernoulli_distribution(0.3)(rng));
  switch (form) {
    case 0: {
      const std::string& v = pick(kIntrans, rng);
      append(w, subj.words);
      w.push_back(v);
      t = "(S " + subj.tree + " (VP (VBZ " + v + ")) (. .))";
      break;
    }
    case 1: {
      const std::string& v = pick(kTrans, rng);
      const Phrase obj = noun_phrase(rng, false);
      append(w, subj.words);
      w.push_back(v);
      append(w, obj.words);
      t = "(S " + subj.tree + " (VP (VBZ " + v + ") " + obj.tree + ") (. .))";
      break;
    }
    case 2: {
      const std::string& v = pick(kIntrans, rng);
      const std::string& p = pick(kPrep, rng);
      const Phrase obj = noun_phrase(rng, false);
      append(w, subj.words);
      w.push_back(v);
      w.push_back(p);
      append(w, obj.words);
      t = "(S " + subj.tree + " (VP (VBZ " + v + ") (PP (IN " + p + ") " + obj.tree + ")) (. .))";
      break;
    }
    case 3: {
      const std::string& a = pick(kAdv, rng);
      const std::string& v = pick(kIntrans, rng);
      append(w, subj.words);
      w.push_back(a);
      w.push_back(v);
      t = "(S " + subj.tree + " (ADVP (RB " + a + ")) (VP (VBZ " + v + ")) (. .))";
      break;
    }
    case 4: {
      const std::string& v = pick(kBare, rng);
      const Phrase obj = noun_phrase(rng, false);
      w.push_back(v);
      append(w, obj.words);
      t = "(S (VP (VB " + v + ") " + obj.tree + ") (. .))";
      break;
    }
    default: {
      const std::string& v = pick(kBare, rng);
      const Phrase obj = noun_phrase(rng, false);
      w.push_back("does");
      append(w, subj.words);
      w.push_back(v);
      append(w, obj.words);
      t = "(SQ (VBZ does) " + subj.tree + " (VP (VB " + v + ") " + obj.tree + ") (. ?))";
      punct = "?";
      break;
    }
  }
  w.push_back(punct);
  std::string s;
  for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
  return {s, t};
}

}  // namespace

ToyLines make_toy_lines(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ToyLines out;
  std::set<std::string> seen;
  while (out.sentences.size() < n) {
    auto [s, t] = toy_example(rng);
    if (!seen.insert(s).second) continue;
    out.sentences.push_back(std::move(s));
    out.trees.push_back(std::move(t));
  }
  return out;
}

ToyCorpus make_toy_corpus(std::size_t n, std::uint64_t seed, std::optional<std::size_t> template_depth) {
  ToyCorpus c;
  c.lines = make_toy_lines(n, seed);
  std::vector<std::vector<std::string>> words;
  std::vector<std::vector<std::string>> tags;
  for (std::size_t i = 0; i < n; ++i) {
    c.raw.push_back(make_raw_pair(c.lines.sentences[i], c.lines.trees[i], template_depth));
    words.push_back(c.raw.back().words);
    tags.push_back(c.raw.back().tree);
  }
  c.sentence_vocab = build_vocab(words, 1);
  c.tree_vocab = build_vocab(tags, 1);
  for (const auto& r : c.raw) c.data.examples.push_back(numericalize(r, c.sentence_vocab, c.tree_vocab));
  return c;
}

std::string random_tree_text(std::uint64_t seed, std::size_t max_nodes) {
  static const std::vector<std::string> kLabels = {"S", "NP", "VP", "PP", "DT", "NN", "VBZ", "IN",
                                                   "JJ", "NP-SBJ", "-NONE-", "SBAR", "WHNP", "."};
  Rng rng(seed);
  const std::size_t target = std::uniform_int_distribution<std::size_t>(1, max_nodes)(rng);
  // Grow by attaching each new node under a random existing node.
  std::vector<std::vector<std::size_t>> children(1);
  std::vector<std::string> labels{pick(kLabels, rng)};
  while (labels.size() < target) {
    const std::size_t parent = std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng);
    children[parent].push_back(labels.size());
    children.emplace_back();
    labels.push_back(pick(kLabels, rng));
  }
  std::string out;
  auto emit = [&](auto&& self, std::size_t node) -> void {
    out += "(" + labels[node];
    for (std::size_t c : children[node]) self(self, c);
    out += ")";
  };
  emit(emit, 0);
  return out;
}

}  // namespace sivae::testing
