#pragma once

// Versioned binary checkpoint:
//   "SIVAECKP" | u32 version | u64 header bytes | JSON header | u32 tensor count
//   then per tensor: u32 name bytes | name | i64 rows | i64 cols | rows*cols f64
// Tensors are written in name order, values column-major.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "sivae/model.hpp"

namespace sivae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  ModelConfig model;
  std::map<std::string, std::string> train_config;  // flat echo of the training config
  std::uint64_t sentence_vocab_hash = 0;
  std::uint64_t tree_vocab_hash = 0;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::int64_t total_batches = 0;
  std::string rng_state;
  std::optional<double> best_valid_elbo;
};

struct Checkpoint {
  CheckpointMeta meta;
  Model model;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws CheckpointMismatch when the vocabularies differ from the ones the
// checkpoint was trained with.
void check_vocabularies(const CheckpointMeta& meta, const Vocabulary& sentence_vocab,
                        const Vocabulary& tree_vocab);
// Throws CheckpointMismatch on any model-config difference.
void check_model_config(const CheckpointMeta& meta, const ModelConfig& expected);

}  // namespace sivae
