#include "sivae/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

#include "sivae/error.hpp"

namespace sivae {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'V', 'A', 'E', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorCode::Io, "truncated checkpoint");
  return v;
}

nlohmann::ordered_json model_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["variant"] = std::string(to_string(c.variant));
  j["setting"] = std::string(to_string(c.setting));
  j["sentence_vocab"] = c.sentence_vocab;
  j["tree_vocab"] = c.tree_vocab;
  j["embed"] = c.embed;
  j["hidden"] = c.hidden;
  j["latent"] = c.latent;
  j["prior_hidden"] = c.prior_hidden;
  j["init_scale"] = c.init_scale;
  return j;
}

ModelConfig model_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.setting = parse_setting(j.at("setting").get<std::string>());
  c.sentence_vocab = j.at("sentence_vocab").get<int>();
  c.tree_vocab = j.at("tree_vocab").get<int>();
  c.embed = j.at("embed").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.latent = j.at("latent").get<int>();
  c.prior_hidden = j.at("prior_hidden").get<int>();
  c.init_scale = j.at("init_scale").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta) {
  nlohmann::ordered_json header;
  header["format"] = "sivae-checkpoint";
  header["model"] = model_to_json(model.config());
  nlohmann::ordered_json train = nlohmann::ordered_json::object();
  for (const auto& [k, v] : meta.train_config) train[k] = v;
  header["train_config"] = train;
  header["vocab_hashes"] = {{"sentence", hash_hex(meta.sentence_vocab_hash)},
                            {"tree", hash_hex(meta.tree_vocab_hash)}};
  nlohmann::ordered_json state;
  state["step"] = meta.step;
  state["epoch"] = meta.epoch;
  state["total_batches"] = meta.total_batches;
  state["rng"] = meta.rng_state;
  state["best_valid_elbo"] = meta.best_valid_elbo ? nlohmann::ordered_json(*meta.best_valid_elbo)
                                                  : nlohmann::ordered_json(nullptr);
  header["state"] = state;
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto params = model.params().all();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const ad::Parameter* p : params) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put<std::int64_t>(out, p->value.rows());
      put<std::int64_t>(out, p->value.cols());
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
    }
    if (!out) throw Error(ErrorCode::Io, "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::Io, path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::CheckpointMismatch, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_size = get<std::uint64_t>(in);
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw Error(ErrorCode::Io, "truncated checkpoint header");
  const auto header = nlohmann::ordered_json::parse(text);

  CheckpointMeta meta;
  meta.model = model_from_json(header.at("model"));
  for (const auto& [k, v] : header.at("train_config").items()) meta.train_config[k] = v.get<std::string>();
  meta.sentence_vocab_hash = std::stoull(header.at("vocab_hashes").at("sentence").get<std::string>(), nullptr, 16);
  meta.tree_vocab_hash = std::stoull(header.at("vocab_hashes").at("tree").get<std::string>(), nullptr, 16);
  const auto& state = header.at("state");
  meta.step = state.at("step").get<std::int64_t>();
  meta.epoch = state.at("epoch").get<std::int64_t>();
  meta.total_batches = state.at("total_batches").get<std::int64_t>();
  meta.rng_state = state.at("rng").get<std::string>();
  if (!state.at("best_valid_elbo").is_null()) meta.best_valid_elbo = state.at("best_valid_elbo").get<double>();

  Model model(meta.model);
  const auto count = get<std::uint32_t>(in);
  if (count != model.params().all().size()) {
    throw Error(ErrorCode::CheckpointMismatch, "parameter count differs from the model config");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_size = get<std::uint32_t>(in);
    std::string name(name_size, '\0');
    in.read(name.data(), name_size);
    const auto rows = get<std::int64_t>(in);
    const auto cols = get<std::int64_t>(in);
    if (!model.params().contains(name)) {
      throw Error(ErrorCode::CheckpointMismatch, "unexpected parameter " + name);
    }
    ad::Parameter& p = model.params().at(name);
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw Error(ErrorCode::CheckpointMismatch, "shape mismatch for " + name);
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rows * cols)));
    if (!in) throw Error(ErrorCode::Io, "truncated tensor " + name);
  }
  return Checkpoint{std::move(meta), std::move(model)};
}

void check_vocabularies(const CheckpointMeta& meta, const Vocabulary& sentence_vocab,
                        const Vocabulary& tree_vocab) {
  if (meta.sentence_vocab_hash != sentence_vocab.hash()) {
    throw Error(ErrorCode::CheckpointMismatch, "sentence vocabulary hash differs from checkpoint");
  }
  if (meta.tree_vocab_hash != tree_vocab.hash()) {
    throw Error(ErrorCode::CheckpointMismatch, "tree vocabulary hash differs from checkpoint");
  }
}

void check_model_config(const CheckpointMeta& meta, const ModelConfig& expected) {
  if (!(meta.model == expected)) {
    throw Error(ErrorCode::CheckpointMismatch, "model config differs from checkpoint");
  }
}

}  // namespace sivae
