#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sivae/corpus.hpp"
#include "sivae/model.hpp"
#include "sivae/objectives.hpp"

namespace sivae {

struct EvalOptions {
  DecoderSetting setting = DecoderSetting::Standard;
  Variant variant = Variant::Conditional;
  std::uint64_t seed = 1;
  int batch_size = 32;
  // Decode from posterior means instead of one reparameterized draw.
  bool use_posterior_mean = false;
};

struct ReconstructionReport {
  DecoderSetting setting = DecoderSetting::Standard;
  std::size_t examples = 0;
  // Token counts include EOS but not BOS; tree tokens include ")".
  std::int64_t sentence_tokens = 0;
  std::int64_t tree_tokens = 0;
  double sentence_nll_total = 0;
  double tree_nll_total = 0;
  double kl_x_total = 0;
  double kl_y_total = 0;
  // Set when the decoder setting differs from the one the model was trained with.
  std::optional<std::string> warning;

  double sentence_ppl() const;
  double tree_ppl() const;
  // Per-example means, the NLL/KL columns of the language-modeling table.
  double sentence_nll() const;
  double tree_nll() const;
  double kl_x() const;
  double kl_y() const;
};

ReconstructionReport reconstruction_metrics(const Model& model, const Dataset& dataset,
                                            const EvalOptions& options);

// Header: Model, PPL, NLL, KL; tree-stream scores in parentheses.
std::string reconstruction_header_tsv();
std::string reconstruction_row_tsv(const std::string& model_name, const ReconstructionReport& report);

// log p(x, y, z_x, z_y) - log q(z_x, z_y | x, y) for one draw per row, with
// z = mean + sd * noise. The decoder setting comes from the model config.
Vector importance_log_weights(const Model& model, const Batch& batch, Variant variant,
                              const LatentNoise& noise);

double log_normal_density(const Vector& z, const Vector& mean, const Vector& log_var);

struct SentenceScore {
  double iwae = 0;           // log (1/K) sum_k w_k
  double elbo_estimate = 0;  // (1/K) sum_k log w_k over the same draws
  int samples = 0;
};

SentenceScore score_sentence(const Model& model, const PairedExample& example, Variant variant,
                             int samples, std::uint64_t seed);

enum class Phenomenon { SVA, RA, NPI };
enum class Complexity { Simple, Complex };

struct CaseLabel {
  Phenomenon phenomenon = Phenomenon::SVA;
  Complexity complexity = Complexity::Simple;

  auto operator<=>(const CaseLabel&) const = default;
};

// Accepts "SVA-S", "SVA-simple", "RA-C", "NPI-complex", ...
CaseLabel parse_case_label(std::string_view text);
std::string to_string(const CaseLabel& label);

struct GrammarPair {
  CaseLabel label;
  std::string grammatical;
  std::string ungrammatical;
  std::string grammatical_tree;
  std::string ungrammatical_tree;
};

// Tab-separated: label, grammatical, ungrammatical, grammatical tree, ungrammatical tree.
std::vector<GrammarPair> read_grammar_pairs(const std::filesystem::path& path);
GrammarPair parse_grammar_pair(std::string_view line);

using SentenceScorer = std::function<double(const std::string& sentence, const std::string& tree)>;

struct CaseTally {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct SyntaxEvalResult {
  // Indexed [phenomenon][complexity].
  std::array<std::array<CaseTally, 2>, 3> tallies{};

  const CaseTally& at(const CaseLabel& l) const {
    return tallies[static_cast<std::size_t>(l.phenomenon)][static_cast<std::size_t>(l.complexity)];
  }
  CaseTally& at(const CaseLabel& l) {
    return tallies[static_cast<std::size_t>(l.phenomenon)][static_cast<std::size_t>(l.complexity)];
  }
};

// A pair counts as correct only when the grammatical score is strictly higher.
SyntaxEvalResult targeted_syntactic_eval(const SentenceScorer& scorer, std::span<const GrammarPair> pairs);

// Two header lines (phenomenon, then S/C) followed by one row; "-" for empty cells.
std::string syntax_table_tsv(const std::string& model_name, const SyntaxEvalResult& result);

// Importance-weighted scorer over a trained model; both members of a pair see
// the same noise stream. Trees are truncated to template_depth when set.
SentenceScorer make_model_scorer(const Model& model, const Vocabulary& sentence_vocab,
                                 const Vocabulary& tree_vocab, Variant variant, int samples,
                                 std::uint64_t seed,
                                 std::optional<std::size_t> template_depth = std::nullopt);

}  // namespace sivae
