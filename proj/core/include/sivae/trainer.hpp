#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sivae/checkpoint.hpp"
#include "sivae/corpus.hpp"
#include "sivae/model.hpp"
#include "sivae/objectives.hpp"

namespace sivae {

struct TrainConfig {
  Variant variant = Variant::Conditional;
  DecoderSetting setting = DecoderSetting::Standard;
  double learning_rate = 0.0005;
  int batch_size = 32;
  int epochs = 10;
  double word_dropout = 0.4;
  double anneal_cap = 0.8;
  double anneal_rate = 0.5;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 0;  // steps; 0 disables periodic checkpoints
  std::int64_t max_steps = 0;         // 0 runs every epoch to completion
  bool shuffle = true;

  int embed = 300;
  int hidden = 600;
  int latent = 150;
  int prior_hidden = 400;
  double init_scale = 0.08;

  int template_depth = 0;  // 0 trains on full trees, otherwise on depth-truncated templates
  int max_sentence_len = 150;
  int max_tree_len = 300;

  void validate() const;
  ModelConfig model_config(int sentence_vocab, int tree_vocab) const;

  // Flat key-value form; keys are the field names above.
  std::map<std::string, std::string> to_kv() const;
  void apply_kv(const std::map<std::string, std::string>& kv);
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

// "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);
void write_kv_file(const std::filesystem::path& path, const std::map<std::string, std::string>& kv);

struct TrainState {
  explicit TrainState(Model m) : model(std::move(m)) {}

  Model model;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::int64_t total_batches = 1;
  Rng rng;
  std::optional<double> best_valid_elbo;
  double last_grad_norm = 0;  // global norm of the last applied (clipped) gradient
};

TrainState init_state(const TrainConfig& config, int sentence_vocab, int tree_vocab,
                      std::int64_t total_batches);

// Total optimizer steps a run of config over n training examples takes.
std::int64_t planned_steps(const TrainConfig& config, std::size_t n);

// Ascent step on the batch-mean ELBO with global-norm gradient clipping.
// Throws NonFiniteGradient (leaving the parameters untouched).
LossBreakdown train_step(TrainState& state, const Batch& batch, const TrainConfig& config);

// Removes examples longer than the configured limits (BOS/EOS excluded).
Dataset filter_by_length(const Dataset& dataset, const TrainConfig& config, std::size_t* skipped);

CheckpointMeta make_meta(const TrainState& state, const TrainConfig& config,
                         const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab);
void save_state(const std::filesystem::path& path, const TrainState& state, const TrainConfig& config,
                const Vocabulary& sentence_vocab, const Vocabulary& tree_vocab);
TrainState restore_state(Checkpoint checkpoint);

struct FitOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + train.log.jsonl
  const Vocabulary* sentence_vocab = nullptr;    // required when out_dir is set
  const Vocabulary* tree_vocab = nullptr;
  std::function<void(const std::string&)> log;   // receives each per-step record
  std::optional<TrainState> resume;
};

struct FitResult {
  explicit FitResult(TrainState s) : state(std::move(s)) {}

  TrainState state;
  std::vector<LossBreakdown> validation;  // one per completed epoch
  std::size_t skipped_long = 0;
};

FitResult fit(const Dataset& train, const Dataset& valid, const TrainConfig& config,
              FitOptions options = {});

// kl_weight = 1 ELBO averaged over a dataset. Uses its own noise stream.
LossBreakdown evaluate_elbo(const Model& model, Variant objective, const Dataset& data,
                            int batch_size, std::uint64_t seed);

}  // namespace sivae
