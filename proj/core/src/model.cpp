#include "sivae/model.hpp"

#include <cmath>
#include <random>

#include "sivae/error.hpp"

namespace sivae {

std::string_view to_string(Variant v) { return v == Variant::Conditional ? "c" : "i"; }

std::string_view to_string(DecoderSetting s) {
  return s == DecoderSetting::Standard ? "standard" : "inputless";
}

Variant parse_variant(std::string_view text) {
  if (text == "c" || text == "conditional") return Variant::Conditional;
  if (text == "i" || text == "independent") return Variant::Independent;
  throw Error(ErrorCode::InvalidArgument, "unknown variant '" + std::string(text) + "'");
}

DecoderSetting parse_setting(std::string_view text) {
  if (text == "standard") return DecoderSetting::Standard;
  if (text == "inputless") return DecoderSetting::Inputless;
  throw Error(ErrorCode::InvalidArgument, "unknown decoder setting '" + std::string(text) + "'");
}

void DiagonalGaussian::validate() const {
  if (mean.size() != log_var.size()) {
    throw Error(ErrorCode::DimensionMismatch, "mean and log-variance dimensions differ");
  }
  if (!mean.allFinite() || !log_var.allFinite() || !variance().allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "Gaussian parameters are not finite");
  }
}

DiagonalGaussian DiagonalGaussian::standard(Eigen::Index d) {
  return {Vector::Zero(d), Vector::Zero(d)};
}

DecoderState DecoderState::zeros(int hidden) { return {Vector::Zero(hidden), Vector::Zero(hidden)}; }

// --- ParameterStore --------------------------------------------------------

ad::Parameter& ParameterStore::add(const std::string& name, Matrix value) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw Error(ErrorCode::InvalidArgument, "duplicate parameter " + name);
  it->second.name = name;
  it->second.value = std::move(value);
  it->second.zero_grad();
  return it->second;
}

ad::Parameter& ParameterStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter " + std::string(name));
  return it->second;
}

const ad::Parameter& ParameterStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter " + std::string(name));
  return it->second;
}

bool ParameterStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

std::vector<ad::Parameter*> ParameterStore::all() {
  std::vector<ad::Parameter*> out;
  for (auto& [name, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const ad::Parameter*> ParameterStore::all() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& [name, p] : params_) out.push_back(&p);
  return out;
}

std::vector<ad::Parameter*> ParameterStore::group(std::string_view group) {
  std::vector<ad::Parameter*> out;
  const std::string prefix = std::string(group) + ".";
  for (auto& [name, p] : params_) {
    if (name.starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

// --- Model -----------------------------------------------------------------

Model::Model(const ModelConfig& config) : config_(config) {
  if (config.sentence_vocab <= Vocabulary::kReserved || config.tree_vocab <= Vocabulary::kReserved ||
      config.embed <= 0 || config.hidden <= 0 || config.latent <= 0 || config.prior_hidden <= 0) {
    throw Error(ErrorCode::InvalidArgument, "model dimensions must be positive");
  }
  allocate();
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : Model(config) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-config.init_scale, config.init_scale);
  for (ad::Parameter* p : params_.all()) {
    const bool head_bias = p->name.ends_with(".mean.b") || p->name.ends_with(".logvar.b");
    if (head_bias) continue;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = uni(rng);
  }
}

int Model::tree_head_inputs() const {
  return 2 * config_.hidden + (config_.variant == Variant::Conditional ? config_.latent : 0);
}

void Model::allocate() {
  const int E = config_.embed, H = config_.hidden, d = config_.latent, P = config_.prior_hidden;
  auto zeros = [](int r, int c) { return Matrix::Zero(r, c); };
  auto encoder = [&](const std::string& prefix, int vocab, int head_in) {
    params_.add(prefix + ".embed", zeros(vocab, E));
    for (const char* dir : {".fwd", ".bwd"}) {
      params_.add(prefix + dir + ".W", zeros(E + H, 4 * H));
      params_.add(prefix + dir + ".b", zeros(1, 4 * H));
    }
    params_.add(prefix + ".mean.W", zeros(head_in, d));
    params_.add(prefix + ".mean.b", zeros(1, d));
    params_.add(prefix + ".logvar.W", zeros(head_in, d));
    params_.add(prefix + ".logvar.b", zeros(1, d));
  };
  encoder("phi.enc_x", config_.sentence_vocab, 2 * H);
  encoder("phi.enc_y", config_.tree_vocab, tree_head_inputs());

  params_.add("theta.dec_y.embed", zeros(config_.tree_vocab, E));
  params_.add("theta.dec_y.lstm.W", zeros(E + d + H, 4 * H));
  params_.add("theta.dec_y.lstm.b", zeros(1, 4 * H));
  params_.add("theta.dec_y.out.W", zeros(H, config_.tree_vocab));
  params_.add("theta.dec_x.embed", zeros(config_.sentence_vocab, E));
  params_.add("theta.dec_x.lstm.W", zeros(E + d + H + H, 4 * H));
  params_.add("theta.dec_x.lstm.b", zeros(1, 4 * H));
  params_.add("theta.dec_x.out.W", zeros(H, config_.sentence_vocab));

  if (config_.variant == Variant::Conditional) {
    params_.add("psi.prior.hidden.W", zeros(d, P));
    params_.add("psi.prior.hidden.b", zeros(1, P));
    params_.add("psi.prior.mean.W", zeros(P, d));
    params_.add("psi.prior.mean.b", zeros(1, d));
    params_.add("psi.prior.logvar.W", zeros(P, d));
    params_.add("psi.prior.logvar.b", zeros(1, d));
  }
}

// --- graph-level -------------------------------------------------------------

namespace graph {

namespace {

template <typename ModelT>
Expr use(Graph& g, ModelT& model, std::string_view name) {
  if constexpr (std::is_const_v<ModelT>) {
    return g.constant(model.params().at(name).value);
  } else {
    return g.param(model.params().at(name));
  }
}

template <typename ModelT>
BoundModel bind_impl(Graph& g, ModelT& model) {
  const int H = model.config().hidden;
  auto heads = [&](const std::string& prefix) {
    return HeadsExpr{use(g, model, prefix + ".mean.W"), use(g, model, prefix + ".mean.b"),
                     use(g, model, prefix + ".logvar.W"), use(g, model, prefix + ".logvar.b")};
  };
  auto encoder = [&](const std::string& prefix) {
    return EncoderExpr{use(g, model, prefix + ".embed"),
                       {use(g, model, prefix + ".fwd.W"), use(g, model, prefix + ".fwd.b"), H},
                       {use(g, model, prefix + ".bwd.W"), use(g, model, prefix + ".bwd.b"), H},
                       heads(prefix)};
  };
  auto decoder = [&](const std::string& prefix) {
    return DecoderExpr{use(g, model, prefix + ".embed"),
                       {use(g, model, prefix + ".lstm.W"), use(g, model, prefix + ".lstm.b"), H},
                       use(g, model, prefix + ".out.W")};
  };
  BoundModel b;
  b.config = &model.config();
  b.enc_x = encoder("phi.enc_x");
  b.enc_y = encoder("phi.enc_y");
  b.dec_y = decoder("theta.dec_y");
  b.dec_x = decoder("theta.dec_x");
  if (model.params().contains("psi.prior.hidden.W")) {
    b.prior = PriorExpr{use(g, model, "psi.prior.hidden.W"), use(g, model, "psi.prior.hidden.b"),
                        heads("psi.prior")};
  }
  return b;
}

std::vector<double> step_mask(const PaddedIds& ids, int t) {
  std::vector<double> mask(static_cast<std::size_t>(ids.rows));
  for (int r = 0; r < ids.rows; ++r) mask[static_cast<std::size_t>(r)] = t < ids.lengths[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
  return mask;
}

std::vector<int> column(const PaddedIds& ids, int t) {
  std::vector<int> col(static_cast<std::size_t>(ids.rows));
  for (int r = 0; r < ids.rows; ++r) col[static_cast<std::size_t>(r)] = ids.at(r, t);
  return col;
}

PaddedIds reverse_rows(const PaddedIds& ids) {
  PaddedIds out = ids;
  for (int r = 0; r < ids.rows; ++r) {
    const int len = ids.lengths[static_cast<std::size_t>(r)];
    for (int t = 0; t < len; ++t) out.at(r, t) = ids.at(r, len - 1 - t);
  }
  return out;
}

StateExpr zero_state(Graph& g, int rows, int hidden) {
  return {g.constant(Matrix::Zero(rows, hidden)), g.constant(Matrix::Zero(rows, hidden))};
}

Expr run_direction(Graph& g, const Expr& embed, const LstmExpr& lstm, const PaddedIds& ids) {
  StateExpr state = zero_state(g, ids.rows, lstm.hidden);
  for (int t = 0; t < ids.width; ++t) {
    const auto mask = step_mask(ids, t);
    const auto col = column(ids, t);
    const Expr x = ad::lookup(embed, col);
    const StateExpr next = lstm_step(lstm, std::span<const Expr>(&x, 1), state);
    state = {ad::select_rows(next.h, state.h, mask), ad::select_rows(next.c, state.c, mask)};
  }
  return state.h;
}

Expr encode_bidirectional(const EncoderExpr& enc, const PaddedIds& ids) {
  for (int len : ids.lengths) {
    if (len <= 0) throw Error(ErrorCode::EmptySequence, "cannot encode an empty sequence");
  }
  Graph& g = enc.embed.graph();
  const Expr parts[] = {run_direction(g, enc.embed, enc.forward, ids),
                        run_direction(g, enc.embed, enc.backward, reverse_rows(ids))};
  return ad::concat_cols(parts);
}

GaussianExpr apply_heads(const HeadsExpr& heads, Expr input, Eigen::Index rows_used) {
  Expr mw = heads.mean_w;
  Expr lw = heads.logvar_w;
  if (rows_used != mw.rows()) {
    mw = ad::slice_rows(mw, 0, rows_used);
    lw = ad::slice_rows(lw, 0, rows_used);
  }
  return {ad::affine(input, mw, heads.mean_b), ad::affine(input, lw, heads.logvar_b)};
}

DecodeOutput run_decoder(const DecoderExpr& dec, std::span<const Expr> conditioning,
                         const PaddedIds& inputs, const PaddedIds* targets,
                         DecoderSetting setting) {
  Graph& g = dec.embed.graph();
  const int rows = inputs.rows;
  const int hidden = dec.lstm.hidden;
  if (targets && (targets->rows != rows || targets->width != inputs.width)) {
    throw Error(ErrorCode::DimensionMismatch, "decoder targets do not match inputs");
  }
  DecodeOutput out;
  StateExpr state = zero_state(g, rows, hidden);
  Expr zero_embed;
  if (setting == DecoderSetting::Inputless) {
    zero_embed = g.constant(Matrix::Zero(rows, dec.embed.cols()));
  }
  std::vector<Expr> step_inputs;
  std::vector<Expr> likelihood_terms;
  for (int t = 0; t < inputs.width; ++t) {
    const auto mask = step_mask(inputs, t);
    step_inputs.clear();
    step_inputs.push_back(setting == DecoderSetting::Inputless ? zero_embed
                                                               : ad::lookup(dec.embed, column(inputs, t)));
    step_inputs.insert(step_inputs.end(), conditioning.begin(), conditioning.end());
    const StateExpr next = lstm_step(dec.lstm, step_inputs, state);
    const Expr logits = ad::matmul(next.h, dec.out);
    out.logits.push_back(logits);
    if (targets) {
      likelihood_terms.push_back(ad::log_softmax_pick(logits, column(*targets, t), mask));
    }
    state = {ad::select_rows(next.h, state.h, mask), ad::select_rows(next.c, state.c, mask)};
  }
  out.final_state = state;
  if (targets) {
    if (likelihood_terms.empty()) {
      out.log_likelihood = g.constant(Matrix::Zero(rows, 1));
    } else {
      out.log_likelihood = ad::sum_cols(ad::concat_cols(likelihood_terms));
    }
  }
  return out;
}

}  // namespace

BoundModel bind(Graph& g, Model& model) { return bind_impl(g, model); }
BoundModel bind(Graph& g, const Model& model) { return bind_impl(g, model); }

StateExpr lstm_step(const LstmExpr& lstm, std::span<const Expr> inputs, const StateExpr& prev) {
  std::vector<Expr> parts(inputs.begin(), inputs.end());
  parts.push_back(prev.h);
  const Expr gates = ad::affine(ad::concat_cols(parts), lstm.weight, lstm.bias);
  const int H = lstm.hidden;
  const Expr in_gate = ad::sigmoid(ad::slice_cols(gates, 0, H));
  const Expr forget_gate = ad::sigmoid(ad::slice_cols(gates, H, H));
  const Expr candidate = ad::tanh(ad::slice_cols(gates, 2 * H, H));
  const Expr out_gate = ad::sigmoid(ad::slice_cols(gates, 3 * H, H));
  const Expr c = ad::add(ad::mul(forget_gate, prev.c), ad::mul(in_gate, candidate));
  const Expr h = ad::mul(out_gate, ad::tanh(c));
  return {h, c};
}

GaussianExpr encode_sentence(const BoundModel& m, const PaddedIds& x) {
  const Expr pooled = encode_bidirectional(m.enc_x, x);
  return apply_heads(m.enc_x.heads, pooled, pooled.cols());
}

GaussianExpr encode_tree(const BoundModel& m, const PaddedIds& y, std::optional<Expr> z_x,
                         Variant mode) {
  if ((mode == Variant::Conditional) != z_x.has_value()) {
    throw Error(ErrorCode::ModeMismatch,
                mode == Variant::Conditional ? "conditional tree encoding needs z_x"
                                             : "independent tree encoding takes no z_x");
  }
  const Expr pooled = encode_bidirectional(m.enc_y, y);
  if (mode == Variant::Independent) {
    return apply_heads(m.enc_y.heads, pooled, pooled.cols());
  }
  if (m.enc_y.heads.mean_w.rows() != pooled.cols() + z_x->cols()) {
    throw Error(ErrorCode::ModeMismatch, "tree encoder heads have no z_x block");
  }
  const Expr parts[] = {pooled, *z_x};
  return apply_heads(m.enc_y.heads, ad::concat_cols(parts), m.enc_y.heads.mean_w.rows());
}

GaussianExpr conditional_prior(const BoundModel& m, Expr z_x) {
  if (!m.prior) throw Error(ErrorCode::ModeMismatch, "model has no conditional prior network");
  const Expr hidden = ad::tanh(ad::affine(z_x, m.prior->hidden_w, m.prior->hidden_b));
  return apply_heads(m.prior->heads, hidden, hidden.cols());
}

Expr reparameterize(const GaussianExpr& g, const Matrix& noise) {
  if (noise.rows() != g.mean.rows() || noise.cols() != g.mean.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "noise shape does not match the Gaussian");
  }
  Graph& gr = g.mean.graph();
  const Expr sd = ad::exp(ad::scale(g.log_var, 0.5));
  return ad::add(g.mean, ad::mul(sd, gr.constant(noise)));
}

DecodeOutput decode_tree(const BoundModel& m, Expr z_y, const PaddedIds& inputs,
                         const PaddedIds* targets, DecoderSetting setting) {
  return run_decoder(m.dec_y, std::span<const Expr>(&z_y, 1), inputs, targets, setting);
}

DecodeOutput decode_sentence(const BoundModel& m, Expr z_x, Expr tree_h, const PaddedIds& inputs,
                             const PaddedIds* targets, DecoderSetting setting) {
  const Expr conditioning[] = {z_x, tree_h};
  return run_decoder(m.dec_x, conditioning, inputs, targets, setting);
}

}  // namespace graph

PaddedIds shift_inputs(const PaddedIds& full) {
  PaddedIds out;
  out.rows = full.rows;
  out.width = std::max(0, full.width - 1);
  out.ids.resize(static_cast<std::size_t>(out.rows) * out.width);
  for (int r = 0; r < full.rows; ++r) {
    for (int t = 0; t < out.width; ++t) out.at(r, t) = full.at(r, t);
    out.lengths.push_back(std::max(0, full.lengths[static_cast<std::size_t>(r)] - 1));
  }
  return out;
}

PaddedIds shift_targets(const PaddedIds& full) {
  PaddedIds out;
  out.rows = full.rows;
  out.width = std::max(0, full.width - 1);
  out.ids.resize(static_cast<std::size_t>(out.rows) * out.width);
  for (int r = 0; r < full.rows; ++r) {
    for (int t = 0; t < out.width; ++t) out.at(r, t) = full.at(r, t + 1);
    out.lengths.push_back(std::max(0, full.lengths[static_cast<std::size_t>(r)] - 1));
  }
  return out;
}

// --- value API ----------------------------------------------------------------

namespace {

PaddedIds single_row(std::span<const int> ids) {
  std::vector<std::vector<int>> rows{{ids.begin(), ids.end()}};
  return pad(rows);
}

DiagonalGaussian to_gaussian(const graph::GaussianExpr& g) {
  return {g.mean.value().row(0).transpose(), g.log_var.value().row(0).transpose()};
}

void check_latent(const Model& model, const Vector& z, const char* what) {
  if (z.size() != model.config().latent) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has the wrong dimension");
  }
}

Matrix stack_logits(const std::vector<ad::Expr>& logits) {
  if (logits.empty()) return Matrix(0, 0);
  Matrix out(static_cast<Eigen::Index>(logits.size()), logits.front().cols());
  for (std::size_t t = 0; t < logits.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = logits[t].value().row(0);
  return out;
}

Vector sigmoid(const Vector& v) { return (1.0 + (-v.array()).exp()).inverse(); }

StepOutput direct_step(const Model& model, const char* prefix, const std::vector<const Vector*>& conditioning,
                       int prev_token, const DecoderState& state, DecoderSetting setting) {
  const ModelConfig& cfg = model.config();
  const std::string p(prefix);
  const Matrix& embed = model.params().at(p + ".embed").value;
  const Matrix& W = model.params().at(p + ".lstm.W").value;
  const Matrix& b = model.params().at(p + ".lstm.b").value;
  const Matrix& out = model.params().at(p + ".out.W").value;
  Eigen::Index width = cfg.embed + cfg.hidden;
  for (const Vector* c : conditioning) width += c->size();
  Vector input(width);
  Eigen::Index off = 0;
  if (setting == DecoderSetting::Inputless) {
    input.segment(off, cfg.embed).setZero();
  } else {
    if (prev_token < 0 || prev_token >= embed.rows()) {
      throw Error(ErrorCode::InvalidArgument, "decoder token out of range");
    }
    input.segment(off, cfg.embed) = embed.row(prev_token).transpose();
  }
  off += cfg.embed;
  for (const Vector* c : conditioning) {
    input.segment(off, c->size()) = *c;
    off += c->size();
  }
  input.segment(off, cfg.hidden) = state.h;
  const Vector gates = W.transpose() * input + b.row(0).transpose();
  const int H = cfg.hidden;
  const Vector i = sigmoid(gates.segment(0, H));
  const Vector f = sigmoid(gates.segment(H, H));
  const Vector g = gates.segment(2 * H, H).array().tanh();
  const Vector o = sigmoid(gates.segment(3 * H, H));
  StepOutput result;
  result.state.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
  result.state.h = o.cwiseProduct(Vector(result.state.c.array().tanh()));
  result.logits = out.transpose() * result.state.h;
  return result;
}

}  // namespace

DiagonalGaussian encode_sentence(const Model& model, std::span<const int> sentence) {
  if (sentence.empty()) throw Error(ErrorCode::EmptySequence, "empty sentence");
  ad::Graph g(false);
  const auto m = graph::bind(g, model);
  return to_gaussian(graph::encode_sentence(m, single_row(sentence)));
}

DiagonalGaussian encode_tree(const Model& model, std::span<const int> tree,
                             const std::optional<LatentVector>& z_x, Variant mode) {
  if (tree.empty()) throw Error(ErrorCode::EmptySequence, "empty tree sequence");
  ad::Graph g(false);
  const auto m = graph::bind(g, model);
  std::optional<ad::Expr> zx;
  if (z_x) {
    check_latent(model, *z_x, "z_x");
    zx = g.constant(z_x->transpose());
  }
  return to_gaussian(graph::encode_tree(m, single_row(tree), zx, mode));
}

DiagonalGaussian conditional_prior(const Model& model, const LatentVector& z_x) {
  check_latent(model, z_x, "z_x");
  ad::Graph g(false);
  const auto m = graph::bind(g, model);
  return to_gaussian(graph::conditional_prior(m, g.constant(z_x.transpose())));
}

LatentVector reparameterize(const DiagonalGaussian& g, const Vector& noise) {
  if (noise.size() != g.dim() || g.log_var.size() != g.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "noise dimension does not match the Gaussian");
  }
  return g.mean + g.stddev().cwiseProduct(noise);
}

TeacherForcedLogits decode_tree(const Model& model, const LatentVector& z_y,
                                std::span<const int> y_in, DecoderSetting setting) {
  check_latent(model, z_y, "z_y");
  ad::Graph g(false);
  const auto m = graph::bind(g, model);
  const auto out = graph::decode_tree(m, g.constant(z_y.transpose()), single_row(y_in), nullptr, setting);
  return {stack_logits(out.logits),
          {out.final_state.h.value().row(0).transpose(), out.final_state.c.value().row(0).transpose()}};
}

TeacherForcedLogits decode_sentence(const Model& model, const LatentVector& z_x,
                                    const DecoderState& tree_final, std::span<const int> x_in,
                                    DecoderSetting setting) {
  check_latent(model, z_x, "z_x");
  ad::Graph g(false);
  const auto m = graph::bind(g, model);
  const auto out = graph::decode_sentence(m, g.constant(z_x.transpose()),
                                          g.constant(tree_final.h.transpose()), single_row(x_in),
                                          nullptr, setting);
  return {stack_logits(out.logits),
          {out.final_state.h.value().row(0).transpose(), out.final_state.c.value().row(0).transpose()}};
}

StepOutput tree_decoder_step(const Model& model, const LatentVector& z_y, int prev_token,
                             const DecoderState& state, DecoderSetting setting) {
  check_latent(model, z_y, "z_y");
  return direct_step(model, "theta.dec_y", {&z_y}, prev_token, state, setting);
}

StepOutput sentence_decoder_step(const Model& model, const LatentVector& z_x, const Vector& tree_h,
                                 int prev_token, const DecoderState& state,
                                 DecoderSetting setting) {
  check_latent(model, z_x, "z_x");
  return direct_step(model, "theta.dec_x", {&z_x, &tree_h}, prev_token, state, setting);
}

}  // namespace sivae
