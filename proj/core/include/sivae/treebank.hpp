#pragma once

// Bracketed constituency trees: parsing, leaf stripping, linearization into
// tree-token sequences and depth-truncated templates.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sivae {

struct ConstituencyTree {
  std::string label;
  std::vector<ConstituencyTree> children;
  std::optional<std::string> terminal_word;

  bool is_leaf() const { return children.empty(); }
  bool is_preterminal() const { return children.empty() && terminal_word.has_value(); }
  std::size_t node_count() const;
  std::size_t depth() const;

  bool operator==(const ConstituencyTree&) const = default;
};

// Tokens are either an open tag "(TAG" or the close token ")".
using TreeSequence = std::vector<std::string>;

inline constexpr std::string_view kCloseToken = ")";

struct ParseOptions {
  // PTB files wrap every tree in an unlabeled "( ... )". When set, an
  // unlabeled root with a single child is replaced by that child.
  bool unwrap_unlabeled_root = false;
};

ConstituencyTree parse_bracketed(std::string_view text, ParseOptions options = {});

ConstituencyTree strip_leaves(const ConstituencyTree& tree);

TreeSequence linearize(const ConstituencyTree& tree);

ConstituencyTree delinearize(const TreeSequence& seq);

TreeSequence simplify_template(const ConstituencyTree& tree, std::size_t depth = 2);

struct SequenceCheck {
  bool valid = false;
  // Index of the first offending token; equals the sequence length when the
  // violation is an unterminated bracket.
  std::size_t first_violation = 0;

  explicit operator bool() const { return valid; }
};

SequenceCheck validate_sequence(const TreeSequence& seq);

// Bracketed rendering: "(S(NP)(VP))" for stripped trees, "(NN book)" with words.
std::string to_bracketed(const ConstituencyTree& tree);

// "(S(NP)(VP))"-style concatenation of a token sequence.
std::string join_compact(const TreeSequence& seq);
// "(S (NP ) (VP ) )"-style space separated rendering; the on-disk format.
std::string join_spaced(const TreeSequence& seq);
// "( S ( NP ) ( VP ) )", the layout of the paraphrase tables.
std::string join_detached(const TreeSequence& seq);
// Accepts any of the three renderings above.
TreeSequence split_tokens(std::string_view line);

bool is_open_token(std::string_view token);
std::string_view open_token_label(std::string_view token);

}  // namespace sivae
