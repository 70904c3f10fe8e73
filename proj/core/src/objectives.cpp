#include "sivae/objectives.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "sivae/error.hpp"

namespace sivae {

double kl_standard_normal(const DiagonalGaussian& q) {
  q.validate();
  const auto lv = q.log_var.array();
  return 0.5 * (-lv - 1.0 + lv.exp() + q.mean.array().square()).sum();
}

double kl_diag_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  q.validate();
  p.validate();
  if (q.dim() != p.dim()) throw Error(ErrorCode::DimensionMismatch, "KL between Gaussians of different dimension");
  const auto lq = q.log_var.array();
  const auto lp = p.log_var.array();
  const auto diff = p.mean.array() - q.mean.array();
  return 0.5 * (lp - lq - 1.0 + (lq - lp).exp() + diff.square() * (-lp).exp()).sum();
}

Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  // A fresh distribution per call: no cached spare survives between calls, so
  // the engine state alone determines every later draw.
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

LatentNoise draw_noise(Rng& rng, int rows, int latent) {
  LatentNoise n;
  n.x = standard_normal(rng, rows, latent);
  n.y = standard_normal(rng, rows, latent);
  return n;
}

std::string to_log_record(std::int64_t step, const LossBreakdown& loss) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["rec_x"] = loss.rec_x;
  j["rec_y"] = loss.rec_y;
  j["kl_x"] = loss.kl_x;
  j["kl_y"] = loss.kl_y;
  j["kl_weight"] = loss.kl_weight;
  j["elbo"] = loss.elbo;
  return j.dump();
}

namespace graph {

Expr kl_standard_normal(const GaussianExpr& q) {
  const Expr terms = ad::add(ad::sub(ad::exp(q.log_var), q.log_var), ad::square(q.mean));
  return ad::scale(ad::add_scalar(ad::sum_cols(terms), -static_cast<double>(q.mean.cols())), 0.5);
}

Expr kl_diag_gaussians(const GaussianExpr& q, const GaussianExpr& p) {
  const Expr log_ratio = ad::sub(p.log_var, q.log_var);
  const Expr var_ratio = ad::exp(ad::scale(log_ratio, -1.0));
  const Expr mahalanobis = ad::mul(ad::square(ad::sub(p.mean, q.mean)), ad::exp(ad::scale(p.log_var, -1.0)));
  const Expr terms = ad::add(ad::add(log_ratio, var_ratio), mahalanobis);
  return ad::scale(ad::add_scalar(ad::sum_cols(terms), -static_cast<double>(q.mean.cols())), 0.5);
}

ElboExpr build_elbo(const BoundModel& m, const Batch& batch, const Batch* decoder_inputs,
                    Variant objective, const LatentNoise& noise) {
  const DecoderSetting setting = m.config->setting;
  const Batch& teacher = decoder_inputs ? *decoder_inputs : batch;

  const GaussianExpr q_x = encode_sentence(m, batch.sentence);
  const Expr z_x = reparameterize(q_x, noise.x);

  ElboExpr out;
  out.kl_x = kl_standard_normal(q_x);
  GaussianExpr q_y;
  if (objective == Variant::Conditional) {
    q_y = encode_tree(m, batch.tree, z_x, Variant::Conditional);
    out.kl_y = kl_diag_gaussians(q_y, conditional_prior(m, z_x));
  } else {
    q_y = encode_tree(m, batch.tree, std::nullopt, Variant::Independent);
    out.kl_y = kl_standard_normal(q_y);
  }
  const Expr z_y = reparameterize(q_y, noise.y);

  const PaddedIds tree_in = shift_inputs(teacher.tree);
  const PaddedIds tree_out = shift_targets(batch.tree);
  const DecodeOutput tree = decode_tree(m, z_y, tree_in, &tree_out, setting);
  const PaddedIds sent_in = shift_inputs(teacher.sentence);
  const PaddedIds sent_out = shift_targets(batch.sentence);
  const DecodeOutput sent = decode_sentence(m, z_x, tree.final_state.h, sent_in, &sent_out, setting);
  out.rec_y = tree.log_likelihood;
  out.rec_x = sent.log_likelihood;
  return out;
}

Expr mean_objective(const ElboExpr& t, double kl_weight) {
  const Expr rec = ad::add(t.rec_x, t.rec_y);
  const Expr kl = ad::add(t.kl_x, t.kl_y);
  const Expr per_row = ad::sub(rec, ad::scale(kl, kl_weight));
  return ad::scale(ad::sum_all(per_row), 1.0 / static_cast<double>(per_row.rows()));
}

LossBreakdown summarize(const ElboExpr& t, double kl_weight) {
  LossBreakdown l;
  l.examples = static_cast<int>(t.rec_x.rows());
  const double n = static_cast<double>(l.examples);
  l.rec_x = t.rec_x.value().sum() / n;
  l.rec_y = t.rec_y.value().sum() / n;
  l.kl_x = t.kl_x.value().sum() / n;
  l.kl_y = t.kl_y.value().sum() / n;
  l.kl_weight = kl_weight;
  l.elbo = l.rec_x + l.rec_y - kl_weight * (l.kl_x + l.kl_y);
  return l;
}

}  // namespace graph

LossBreakdown elbo(const Model& model, Variant objective, const Batch& batch, double kl_weight,
                   const LatentNoise& noise) {
  ad::Graph g(false);
  const auto m = graph::bind(g, model);
  return graph::summarize(graph::build_elbo(m, batch, nullptr, objective, noise), kl_weight);
}

LossBreakdown elbo_c(const Model& model, const Batch& batch, double kl_weight,
                     const LatentNoise& noise) {
  return elbo(model, Variant::Conditional, batch, kl_weight, noise);
}

LossBreakdown elbo_i(const Model& model, const Batch& batch, double kl_weight,
                     const LatentNoise& noise) {
  return elbo(model, Variant::Independent, batch, kl_weight, noise);
}

void AnnealSchedule::validate() const {
  if (!(cap > 0.0 && cap <= 1.0)) throw Error(ErrorCode::InvalidArgument, "anneal cap must be in (0, 1]");
  if (!(rate > 0.0 && rate <= 1.0)) throw Error(ErrorCode::InvalidArgument, "anneal rate must be in (0, 1]");
  if (total_batches <= 0) throw Error(ErrorCode::InvalidArgument, "total batches must be positive");
}

double anneal_weight(std::int64_t step, const AnnealSchedule& s) {
  s.validate();
  if (step <= 0) return 0.0;
  const double ramp = s.rate * static_cast<double>(s.total_batches);
  return std::min(s.cap, s.cap * static_cast<double>(step) / ramp);
}

std::vector<int> word_dropout(std::span<const int> tokens, double rate, int unk_id, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout rate must be in [0, 1]");
  std::vector<int> out(tokens.begin(), tokens.end());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int& t : out) {
    if (t == Vocabulary::kBos) continue;
    if (uni(rng) < rate) t = unk_id;
  }
  return out;
}

Batch apply_word_dropout(const Batch& batch, double rate, Rng& rng) {
  Batch out = batch;
  if (rate == 0.0) return out;
  for (PaddedIds* ids : {&out.sentence, &out.tree}) {
    for (int r = 0; r < ids->rows; ++r) {
      const int len = ids->lengths[static_cast<std::size_t>(r)];
      std::span<int> row(ids->ids.data() + static_cast<std::size_t>(r) * ids->width, static_cast<std::size_t>(len));
      const auto dropped = word_dropout(row, rate, Vocabulary::kUnk, rng);
      std::copy(dropped.begin(), dropped.end(), row.begin());
    }
  }
  return out;
}

}  // namespace sivae
