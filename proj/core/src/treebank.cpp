#include "sivae/treebank.hpp"

#include <algorithm>
#include <cctype>

#include "sivae/error.hpp"

namespace sivae {

namespace {

enum class LexKind { Open, Close, Atom };

struct Lexeme {
  LexKind kind;
  std::string_view text;
};

std::vector<Lexeme> lex(std::string_view text) {
  std::vector<Lexeme> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char ch = text[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      ++i;
    } else if (ch == '(') {
      out.push_back({LexKind::Open, text.substr(i, 1)});
      ++i;
    } else if (ch == ')') {
      out.push_back({LexKind::Close, text.substr(i, 1)});
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '(' && text[j] != ')' &&
             !std::isspace(static_cast<unsigned char>(text[j]))) {
        ++j;
      }
      out.push_back({LexKind::Atom, text.substr(i, j - i)});
      i = j;
    }
  }
  return out;
}

class Parser {
 public:
  explicit Parser(const std::vector<Lexeme>& lexemes) : lex_(lexemes) {}

  ConstituencyTree parse_root(bool allow_unlabeled) {
    ConstituencyTree tree = parse_node(allow_unlabeled);
    if (pos_ != lex_.size()) {
      throw Error(ErrorCode::MalformedTree, "trailing tokens after the root node");
    }
    return tree;
  }

 private:
  ConstituencyTree parse_node(bool allow_unlabeled) {
    if (pos_ >= lex_.size() || lex_[pos_].kind != LexKind::Open) {
      throw Error(ErrorCode::MalformedTree, "expected '(' at token " + std::to_string(pos_));
    }
    ++pos_;
    ConstituencyTree node;
    if (pos_ < lex_.size() && lex_[pos_].kind == LexKind::Atom) {
      node.label = std::string(lex_[pos_].text);
      ++pos_;
    } else if (!allow_unlabeled) {
      throw Error(ErrorCode::EmptyLabel, "'(' not followed by a label at token " + std::to_string(pos_));
    }
    while (pos_ < lex_.size() && lex_[pos_].kind != LexKind::Close) {
      if (lex_[pos_].kind == LexKind::Atom) {
        if (node.terminal_word || !node.children.empty() || node.label.empty()) {
          throw Error(ErrorCode::MalformedTree,
                      "node '" + node.label + "' mixes words and children");
        }
        node.terminal_word = std::string(lex_[pos_].text);
        ++pos_;
      } else {
        if (node.terminal_word) {
          throw Error(ErrorCode::MalformedTree,
                      "node '" + node.label + "' mixes words and children");
        }
        node.children.push_back(parse_node(false));
      }
    }
    if (pos_ >= lex_.size()) {
      throw Error(ErrorCode::UnbalancedBrackets, "missing ')'");
    }
    ++pos_;
    return node;
  }

  const std::vector<Lexeme>& lex_;
  std::size_t pos_ = 0;
};

void strip_into(const ConstituencyTree& src, ConstituencyTree& dst) {
  dst.label = src.label;
  dst.terminal_word.reset();
  dst.children.resize(src.children.size());
  for (std::size_t i = 0; i < src.children.size(); ++i) {
    strip_into(src.children[i], dst.children[i]);
  }
}

void emit(const ConstituencyTree& node, std::size_t level, std::size_t max_level,
          TreeSequence& out) {
  out.push_back("(" + node.label);
  if (level < max_level) {
    for (const auto& child : node.children) emit(child, level + 1, max_level, out);
  }
  out.emplace_back(kCloseToken);
}

void render(const ConstituencyTree& node, std::string& out) {
  out += '(';
  out += node.label;
  if (node.terminal_word) {
    out += ' ';
    out += *node.terminal_word;
  }
  for (const auto& child : node.children) render(child, out);
  out += ')';
}

}  // namespace

std::size_t ConstituencyTree::node_count() const {
  std::size_t n = 1;
  for (const auto& c : children) n += c.node_count();
  return n;
}

std::size_t ConstituencyTree::depth() const {
  std::size_t d = 0;
  for (const auto& c : children) d = std::max(d, c.depth());
  return d + 1;
}

bool is_open_token(std::string_view token) {
  return token.size() > 1 && token.front() == '(';
}

std::string_view open_token_label(std::string_view token) { return token.substr(1); }

ConstituencyTree parse_bracketed(std::string_view text, ParseOptions options) {
  const auto lexemes = lex(text);
  if (lexemes.empty()) {
    throw Error(ErrorCode::MalformedTree, "empty tree text");
  }
  // Balance is checked up front so that depth errors win over label errors.
  long depth = 0;
  for (const auto& l : lexemes) {
    if (l.kind == LexKind::Open) ++depth;
    if (l.kind == LexKind::Close && --depth < 0) {
      throw Error(ErrorCode::UnbalancedBrackets, "running depth went negative");
    }
  }
  if (depth != 0) {
    throw Error(ErrorCode::UnbalancedBrackets, "final depth " + std::to_string(depth));
  }
  Parser parser(lexemes);
  ConstituencyTree tree = parser.parse_root(options.unwrap_unlabeled_root);
  if (tree.label.empty()) {
    if (tree.children.size() != 1) {
      throw Error(ErrorCode::EmptyLabel, "unlabeled root without a single child");
    }
    ConstituencyTree inner = std::move(tree.children.front());
    return inner;
  }
  return tree;
}

ConstituencyTree strip_leaves(const ConstituencyTree& tree) {
  ConstituencyTree out;
  strip_into(tree, out);
  return out;
}

TreeSequence linearize(const ConstituencyTree& tree) {
  TreeSequence out;
  out.reserve(2 * tree.node_count());
  emit(tree, 1, static_cast<std::size_t>(-1), out);
  return out;
}

ConstituencyTree delinearize(const TreeSequence& seq) {
  const SequenceCheck check = validate_sequence(seq);
  if (!check) {
    throw Error(ErrorCode::UnbalancedBrackets,
                "invalid tree sequence at token " + std::to_string(check.first_violation));
  }
  ConstituencyTree root;
  std::vector<ConstituencyTree*> stack;
  for (const auto& token : seq) {
    if (is_open_token(token)) {
      if (stack.empty()) {
        root.label = std::string(open_token_label(token));
        stack.push_back(&root);
      } else {
        auto& parent = *stack.back();
        parent.children.push_back(ConstituencyTree{std::string(open_token_label(token)), {}, {}});
        stack.push_back(&parent.children.back());
      }
    } else {
      stack.pop_back();
    }
  }
  return root;
}

TreeSequence simplify_template(const ConstituencyTree& tree, std::size_t depth) {
  if (depth == 0) {
    throw Error(ErrorCode::InvalidArgument, "template depth must be positive");
  }
  TreeSequence out;
  emit(tree, 1, depth, out);
  return out;
}

SequenceCheck validate_sequence(const TreeSequence& seq) {
  if (seq.empty()) return {false, 0};
  long depth = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& token = seq[i];
    if (is_open_token(token)) {
      // A second open tag after the root closed means a forest, not a tree.
      if (i > 0 && depth == 0) return {false, i};
      ++depth;
    } else if (token == kCloseToken) {
      if (depth == 0) return {false, i};
      --depth;
    } else {
      return {false, i};
    }
  }
  if (depth != 0) return {false, seq.size()};
  return {true, seq.size()};
}

std::string to_bracketed(const ConstituencyTree& tree) {
  std::string out;
  render(tree, out);
  return out;
}

std::string join_compact(const TreeSequence& seq) {
  std::string out;
  for (const auto& t : seq) out += t;
  return out;
}

std::string join_spaced(const TreeSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += seq[i];
  }
  return out;
}

std::string join_detached(const TreeSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    if (is_open_token(seq[i])) {
      out += "( ";
      out += open_token_label(seq[i]);
    } else {
      out += seq[i];
    }
  }
  return out;
}

TreeSequence split_tokens(std::string_view line) {
  auto space = [&](std::size_t k) { return std::isspace(static_cast<unsigned char>(line[k])) != 0; };
  auto word_end = [&](std::size_t k) {
    while (k < line.size() && !space(k) && line[k] != '(' && line[k] != ')') ++k;
    return k;
  };
  TreeSequence out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (space(i)) {
      ++i;
    } else if (line[i] == ')') {
      out.emplace_back(kCloseToken);
      ++i;
    } else if (line[i] == '(') {
      std::size_t j = i + 1;
      while (j < line.size() && space(j)) ++j;
      const std::size_t end = word_end(j);
      out.push_back("(" + std::string(line.substr(j, end - j)));
      i = end;
    } else {
      const std::size_t end = word_end(i);
      out.emplace_back(line.substr(i, end - i));
      i = end;
    }
  }
  return out;
}

}  // namespace sivae
