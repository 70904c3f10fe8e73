#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "toy_corpus.hpp"

namespace fs = std::filesystem;
using sivae::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("sivae-cli-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_ / "raw");
    const auto lines = sivae::testing::make_toy_lines(24, 3);
    std::ofstream s(root_ / "raw/train.sent");
    std::ofstream t(root_ / "raw/train.tree");
    for (std::size_t i = 0; i < lines.sentences.size(); ++i) {
      s << lines.sentences[i] << '\n';
      t << lines.trees[i] << '\n';
    }
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& rel) const { return (root_ / rel).string(); }

  fs::path root_;
};

}  // namespace

TEST_F(CliTest, NoSubcommandIsUsageError) { EXPECT_EQ(call({}).code, sivae::cli::kExitUsage); }

TEST_F(CliTest, UnknownFlagIsUsageError) {
  const auto r = call({"preprocess", "--data", path("raw"), "--out", path("pre"), "--bogus", "1"});
  EXPECT_EQ(r.code, sivae::cli::kExitUsage);
}

TEST_F(CliTest, MissingRequiredFlagIsUsageError) {
  EXPECT_EQ(call({"preprocess", "--data", path("raw")}).code, sivae::cli::kExitUsage);
}

TEST_F(CliTest, MissingTreeFileIsUsageError) {
  fs::remove(root_ / "raw/train.tree");
  const auto r = call({"preprocess", "--data", path("raw"), "--out", path("pre")});
  EXPECT_EQ(r.code, sivae::cli::kExitUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, HelpListsFlags) {
  const auto r = call({"train", "--help"});
  EXPECT_EQ(r.code, sivae::cli::kExitOk);
  const std::string text = r.out + r.err;
  for (const char* flag : {"--learning-rate", "--word-dropout", "--anneal-cap", "--resume", "--out"}) {
    EXPECT_NE(text.find(flag), std::string::npos) << flag;
  }
}

TEST_F(CliTest, MissingCheckpointIsUsageError) {
  const auto r = call({"generate", "--checkpoint", path("nope.ckpt"), "--out", path("gen")});
  EXPECT_EQ(r.code, sivae::cli::kExitUsage);
}

TEST_F(CliTest, CorruptCheckpointIsRuntimeError) {
  std::ofstream(root_ / "bad.ckpt") << "not a checkpoint";
  std::ofstream(root_ / "vocab.sent") << "";
  std::ofstream(root_ / "vocab.tree") << "";
  const auto r = call({"generate", "--checkpoint", path("bad.ckpt"), "--out", path("gen")});
  EXPECT_EQ(r.code, sivae::cli::kExitRuntime) << r.err;
}

TEST_F(CliTest, PreprocessWritesManifestAndStreams) {
  const auto r = call({"preprocess", "--data", path("raw"), "--template-depth", "2", "--out", path("pre")});
  ASSERT_EQ(r.code, sivae::cli::kExitOk) << r.err;
  for (const char* f : {"preprocess.manifest.json", "vocab.sent", "vocab.tree", "train.ids", "train.tmpl.ids",
                        "stats.tsv"}) {
    EXPECT_TRUE(fs::exists(root_ / "pre" / f)) << f;
  }
}

TEST_F(CliTest, ConfigFileValuesAreOverriddenByFlags) {
  ASSERT_EQ(call({"preprocess", "--data", path("raw"), "--out", path("pre")}).code, 0);
  {
    std::ofstream cfg(root_ / "train.cfg");
    cfg << "hidden = 8\nembed = 8\nlatent = 2\nprior_hidden = 4\nmax_steps = 3\nbatch_size = 8\n";
  }
  const auto r = call({"train", "--config", path("train.cfg"), "--max-steps", "2", "--data", path("pre"), "--out",
                       path("tr")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("trained 2 steps"), std::string::npos) << r.out;
}
