#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sivae/corpus.hpp"
#include "sivae/model.hpp"

namespace sivae {

using Rng = std::mt19937_64;

// KL(q || N(0, I)) in nats.
double kl_standard_normal(const DiagonalGaussian& q);
// KL(q || p) for diagonal Gaussians, in nats.
double kl_diag_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p);

// Standard-normal noise for one reparameterized draw of each latent.
struct LatentNoise {
  Matrix x;  // rows x latent
  Matrix y;
};

Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);
LatentNoise draw_noise(Rng& rng, int rows, int latent);

struct LossBreakdown {
  double rec_x = 0;  // log-likelihood, nats
  double rec_y = 0;
  double kl_x = 0;
  double kl_y = 0;
  double kl_weight = 0;
  double elbo = 0;   // rec_x + rec_y - kl_weight * (kl_x + kl_y)
  int examples = 0;  // fields above are means over this many examples
};

// Flat JSON record: {"step":..,"rec_x":..,"rec_y":..,"kl_x":..,"kl_y":..,"kl_weight":..,"elbo":..}
std::string to_log_record(std::int64_t step, const LossBreakdown& loss);

namespace graph {

// Per-row KL terms (rows x 1).
Expr kl_standard_normal(const GaussianExpr& q);
Expr kl_diag_gaussians(const GaussianExpr& q, const GaussianExpr& p);

struct ElboExpr {
  Expr rec_x;  // rows x 1
  Expr rec_y;
  Expr kl_x;
  Expr kl_y;
};

// One reparameterized sample per latent per example. decoder_inputs, when
// given, supplies the (word-dropped) teacher inputs; targets always come
// from batch. The decoder setting is taken from the model config.
ElboExpr build_elbo(const BoundModel& m, const Batch& batch, const Batch* decoder_inputs,
                    Variant objective, const LatentNoise& noise);

// Batch-mean weighted ELBO as a 1x1 expression.
Expr mean_objective(const ElboExpr& terms, double kl_weight);

LossBreakdown summarize(const ElboExpr& terms, double kl_weight);

}  // namespace graph

LossBreakdown elbo_c(const Model& model, const Batch& batch, double kl_weight,
                     const LatentNoise& noise);
LossBreakdown elbo_i(const Model& model, const Batch& batch, double kl_weight,
                     const LatentNoise& noise);
LossBreakdown elbo(const Model& model, Variant objective, const Batch& batch, double kl_weight,
                   const LatentNoise& noise);

struct AnnealSchedule {
  double cap = 0.8;
  double rate = 0.5;
  std::int64_t total_batches = 1;

  void validate() const;
};

// Linear ramp from 0 reaching cap after rate * total_batches steps.
double anneal_weight(std::int64_t step, const AnnealSchedule& schedule);

// Replaces every non-BOS token with unk_id independently with probability rate.
std::vector<int> word_dropout(std::span<const int> tokens, double rate, int unk_id, Rng& rng);

// Applies word_dropout to the in-length part of both streams of a batch.
Batch apply_word_dropout(const Batch& batch, double rate, Rng& rng);

}  // namespace sivae
