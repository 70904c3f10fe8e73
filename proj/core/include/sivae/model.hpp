#pragma once

// Recognition encoders, the conditional prior network and the chained
// tree -> sentence decoders.
//
// Parameters are grouped by the first segment of their hierarchical name:
//   phi.*   recognition networks (two bidirectional LSTM encoders + heads)
//   theta.* generation networks (tree and sentence LSTM decoders)
//   psi.*   conditional prior network (only present for the conditional variant)

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sivae/autodiff.hpp"
#include "sivae/corpus.hpp"

namespace sivae {

using ad::Matrix;
using ad::Vector;
using LatentVector = Vector;

enum class Variant { Conditional, Independent };
enum class DecoderSetting { Standard, Inputless };

std::string_view to_string(Variant v);
std::string_view to_string(DecoderSetting s);
Variant parse_variant(std::string_view text);
DecoderSetting parse_setting(std::string_view text);

struct ModelConfig {
  Variant variant = Variant::Conditional;
  DecoderSetting setting = DecoderSetting::Standard;
  int sentence_vocab = 0;
  int tree_vocab = 0;
  int embed = 300;
  int hidden = 600;
  int latent = 150;
  int prior_hidden = 400;
  double init_scale = 0.08;

  bool operator==(const ModelConfig&) const = default;
};

struct DiagonalGaussian {
  Vector mean;
  Vector log_var;

  Eigen::Index dim() const { return mean.size(); }
  Vector variance() const { return log_var.array().exp(); }
  Vector stddev() const { return (0.5 * log_var.array()).exp(); }
  // Throws DimensionMismatch / NonFiniteInput.
  void validate() const;

  static DiagonalGaussian standard(Eigen::Index d);
};

struct DecoderState {
  Vector h;
  Vector c;

  static DecoderState zeros(int hidden);
};

class ParameterStore {
 public:
  ad::Parameter& add(const std::string& name, Matrix value);
  ad::Parameter& at(std::string_view name);
  const ad::Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
  // Parameters whose name starts with "<group>.".
  std::vector<ad::Parameter*> group(std::string_view group);

  void zero_grad();
  std::size_t count() const;

 private:
  std::map<std::string, ad::Parameter, std::less<>> params_;
};

class Model {
 public:
  // Zero-initialized parameters.
  explicit Model(const ModelConfig& config);
  // Uniform(-init_scale, init_scale) weights; Gaussian-head biases at zero.
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Width of the tree-encoder Gaussian heads' input: 2*hidden, plus latent
  // for the conditional variant (the z_x block).
  int tree_head_inputs() const;

 private:
  void allocate();

  ModelConfig config_;
  ParameterStore params_;
};

// ---------------------------------------------------------------------------
// Graph-level building blocks shared by the objectives, evaluation and tests.

namespace graph {

using ad::Expr;
using ad::Graph;

struct GaussianExpr {
  Expr mean;
  Expr log_var;
};

struct StateExpr {
  Expr h;
  Expr c;
};

struct LstmExpr {
  Expr weight;
  Expr bias;
  int hidden = 0;
};

struct HeadsExpr {
  Expr mean_w, mean_b, logvar_w, logvar_b;
};

struct EncoderExpr {
  Expr embed;
  LstmExpr forward;
  LstmExpr backward;
  HeadsExpr heads;
};

struct DecoderExpr {
  Expr embed;
  LstmExpr lstm;
  Expr out;
};

struct PriorExpr {
  Expr hidden_w, hidden_b;
  HeadsExpr heads;
};

// Every parameter bound once into a graph. Binding a mutable model records
// gradients; binding a const model inserts constants.
struct BoundModel {
  const ModelConfig* config = nullptr;
  EncoderExpr enc_x;
  EncoderExpr enc_y;
  DecoderExpr dec_y;
  DecoderExpr dec_x;
  std::optional<PriorExpr> prior;
};

BoundModel bind(Graph& g, Model& model);
BoundModel bind(Graph& g, const Model& model);

StateExpr lstm_step(const LstmExpr& lstm, std::span<const Expr> inputs, const StateExpr& prev);

GaussianExpr encode_sentence(const BoundModel& m, const PaddedIds& x);
// z_x must be present exactly when mode is Conditional.
GaussianExpr encode_tree(const BoundModel& m, const PaddedIds& y, std::optional<Expr> z_x,
                         Variant mode);
GaussianExpr conditional_prior(const BoundModel& m, Expr z_x);
Expr reparameterize(const GaussianExpr& g, const Matrix& noise);

struct DecodeOutput {
  std::vector<Expr> logits;   // one (rows x vocab) block per step
  Expr log_likelihood;        // rows x 1, summed over unmasked targets
  StateExpr final_state;      // state after each row's last input
};

// inputs: teacher tokens fed at each step (lengths = number of steps per row).
// targets: token predicted at each step, same shape; may be null.
DecodeOutput decode_tree(const BoundModel& m, Expr z_y, const PaddedIds& inputs,
                         const PaddedIds* targets, DecoderSetting setting);
DecodeOutput decode_sentence(const BoundModel& m, Expr z_x, Expr tree_h, const PaddedIds& inputs,
                             const PaddedIds* targets, DecoderSetting setting);

}  // namespace graph

// Drops the last token of every row: decoder teacher inputs for BOS..EOS rows.
PaddedIds shift_inputs(const PaddedIds& full);
// Drops the first token of every row: decoder targets for BOS..EOS rows.
PaddedIds shift_targets(const PaddedIds& full);

// ---------------------------------------------------------------------------
// Single-example value API.

DiagonalGaussian encode_sentence(const Model& model, std::span<const int> sentence);
DiagonalGaussian encode_tree(const Model& model, std::span<const int> tree,
                             const std::optional<LatentVector>& z_x, Variant mode);
DiagonalGaussian conditional_prior(const Model& model, const LatentVector& z_x);
LatentVector reparameterize(const DiagonalGaussian& g, const Vector& noise);

struct TeacherForcedLogits {
  Matrix logits;  // steps x vocab
  DecoderState final_state;
};

// y_in / x_in are teacher inputs beginning with BOS.
TeacherForcedLogits decode_tree(const Model& model, const LatentVector& z_y,
                                std::span<const int> y_in,
                                DecoderSetting setting = DecoderSetting::Standard);
TeacherForcedLogits decode_sentence(const Model& model, const LatentVector& z_x,
                                    const DecoderState& tree_final, std::span<const int> x_in,
                                    DecoderSetting setting);

// One autoregressive step computed directly (no tape); used by generation.
struct StepOutput {
  Vector logits;
  DecoderState state;
};

StepOutput tree_decoder_step(const Model& model, const LatentVector& z_y, int prev_token,
                             const DecoderState& state, DecoderSetting setting);
StepOutput sentence_decoder_step(const Model& model, const LatentVector& z_x, const Vector& tree_h,
                                 int prev_token, const DecoderState& state,
                                 DecoderSetting setting);

}  // namespace sivae
