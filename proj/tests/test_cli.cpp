#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

#include "imagine/cli.hpp"
#include "imagine/eval.hpp"
#include "support.hpp"

using namespace imagine;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "imagine");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

struct ScopedEnv {
  explicit ScopedEnv(const char* value) { ::setenv("IMAGINE_SEED", value, 1); }
  ~ScopedEnv() { ::unsetenv("IMAGINE_SEED"); }
};

// Tiny 3x3 dataset and model on disk.
fs::path tiny_files(const std::string& name, std::size_t latent = 2) {
  const fs::path dir = fixture::scratch_dir(name);
  const auto cfg = fixture::tiny_config(latent);
  write_dataset(fixture::tiny_dataset(cfg, 40, 5), dir / "data.mna");
  fixture::tiny_model(1, latent).save(dir / "model.jvc");
  return dir;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"--help"}), cli::kExitOk);
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"no-such-command"}), cli::kExitUsage);
  EXPECT_EQ(run({"gen-data"}), cli::kExitUsage);  // --out missing
  EXPECT_EQ(run({"train", "--data", "x", "--out", "y", "--steps", "many"}), cli::kExitUsage);
  const fs::path dir = fixture::scratch_dir("cli_usage");
  EXPECT_EQ(run({"gen-data", "--source", "scanner", "--out", dir.string()}), cli::kExitUsage);
  EXPECT_EQ(run({"gen-data", "--source", "idx", "--out", dir.string()}), cli::kExitUsage);
  EXPECT_EQ(run({"sample", "--model", (dir / "missing.jvc").string(), "--query", "*"}), cli::kExitUsage);
}

TEST(Cli, GenDataRecordsConfigThatReproducesTheRun) {
  const fs::path dir = fixture::scratch_dir("cli_gen");
  ASSERT_EQ(run({"gen-data", "--per-concept", "1", "--split", "comp", "--seed", "7", "--out", (dir / "a").string()}),
            cli::kExitOk);
  const Dataset d = read_dataset(dir / "a" / "dataset.mna");
  EXPECT_EQ(d.size(), 240u);
  EXPECT_EQ(d.concepts(Split::train).size(), 204u);
  ASSERT_TRUE(fs::exists(dir / "a" / "gen-data.toml"));
  // Flags override the file; everything else comes from it.
  ASSERT_EQ(run({"gen-data", "--config", (dir / "a" / "gen-data.toml").string(), "--out", (dir / "b").string()}),
            cli::kExitOk);
  EXPECT_EQ(slurp(dir / "a" / "dataset.mna"), slurp(dir / "b" / "dataset.mna"));
  ASSERT_EQ(run({"gen-data", "--config", (dir / "a" / "gen-data.toml").string(), "--seed", "8", "--out",
                 (dir / "c").string()}),
            cli::kExitOk);
  EXPECT_NE(slurp(dir / "a" / "dataset.mna"), slurp(dir / "c" / "dataset.mna"));
}

TEST(Cli, SeedFallsBackToEnvironment) {
  const fs::path dir = fixture::scratch_dir("cli_env");
  ASSERT_EQ(run({"gen-data", "--per-concept", "1", "--split", "none", "--seed", "11", "--out", (dir / "flag").string()}),
            cli::kExitOk);
  {
    ScopedEnv env("11");
    ASSERT_EQ(run({"gen-data", "--per-concept", "1", "--split", "none", "--out", (dir / "env").string()}), cli::kExitOk);
    // The flag still wins over the environment.
    ASSERT_EQ(run({"gen-data", "--per-concept", "1", "--split", "none", "--seed", "12", "--out",
                   (dir / "both").string()}),
              cli::kExitOk);
  }
  EXPECT_EQ(slurp(dir / "flag" / "dataset.mna"), slurp(dir / "env" / "dataset.mna"));
  EXPECT_NE(slurp(dir / "flag" / "dataset.mna"), slurp(dir / "both" / "dataset.mna"));
}

TEST(Cli, GradcheckPasses) { EXPECT_EQ(run({"gradcheck", "--seed", "3"}), cli::kExitOk); }

TEST(Cli, TrainWritesModelAndLog) {
  const fs::path dir = tiny_files("cli_train");
  ASSERT_EQ(run({"train", "--data", (dir / "data.mna").string(), "--out", (dir / "run").string(), "--steps", "20",
                 "--batch", "8", "--log-every", "10", "--latent-dim", "2"}),
            cli::kExitOk);
  EXPECT_EQ(JvaeModel::load(dir / "run" / "model.jvc").latent_dim(), 2u);
  std::ifstream log(dir / "run" / "train_log.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 2u);
  EXPECT_TRUE(fs::exists(dir / "run" / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "train.toml"));
}

TEST(Cli, DivergenceExitsThreeAndKeepsLastGood) {
  const fs::path dir = tiny_files("cli_diverge");
  EXPECT_EQ(run({"train", "--data", (dir / "data.mna").string(), "--out", (dir / "run").string(), "--steps", "50",
                 "--batch", "8", "--lr", "1e200"}),
            cli::kExitNumeric);
  EXPECT_TRUE(fs::exists(dir / "run" / "model_last_good.jvc"));
  EXPECT_FALSE(fs::exists(dir / "run" / "model.jvc"));
}

TEST(Cli, SampleAndInterpolate) {
  const fs::path dir = tiny_files("cli_sample");
  const std::string model = (dir / "model.jvc").string();
  EXPECT_EQ(run({"sample", "--model", model, "--query", "attr0=1", "--n", "4", "--out", (dir / "s" / "q.pgm").string()}),
            cli::kExitOk);
  EXPECT_TRUE(fs::exists(dir / "s" / "q.pgm"));
  EXPECT_TRUE(fs::exists(dir / "s" / "q_sampled.pgm"));
  EXPECT_EQ(run({"sample", "--model", model, "--query", "colour=red"}), cli::kExitUsage);
  EXPECT_EQ(run({"interpolate", "--model", model, "--from", "*", "--to", "attr1=2", "--steps", "5", "--out",
                 (dir / "i.pgm").string()}),
            cli::kExitOk);
  EXPECT_EQ(slurp(dir / "i.pgm").substr(0, 8), "P5\n21 5\n");  // 1 px gutters
  EXPECT_EQ(run({"interpolate", "--model", model, "--from", "*", "--to", "*", "--steps", "1"}), cli::kExitUsage);
}

TEST(Cli, LatentMapNeedsTwoDimensions) {
  const fs::path two = tiny_files("cli_map2", 2), three = tiny_files("cli_map3", 3);
  EXPECT_EQ(run({"latent-map", "--model", (three / "model.jvc").string(), "--out", (three / "m.ppm").string()}),
            cli::kExitUsage);
  EXPECT_FALSE(fs::exists(three / "m.ppm"));
  EXPECT_EQ(run({"latent-map", "--model", (two / "model.jvc").string(), "--data", (two / "data.mna").string(),
                 "--resolution", "16", "--out", (two / "m.ppm").string()}),
            cli::kExitOk);
  EXPECT_EQ(slurp(two / "m.ppm").size(), std::string("P6\n16 16\n255\n").size() + 3 * 16 * 16);

  const JvaeModel m3 = fixture::tiny_model(1, 3);
  EXPECT_THROW(cli::latent_map(m3, {}), std::invalid_argument);
}

TEST(Cli, LatentMapColorsFollowTheDecodedConcept) {
  const JvaeModel m = fixture::tiny_model(4, 2);
  const auto rgb = cli::latent_map(m, {3.0, 8});
  ASSERT_EQ(rgb.size(), 3u * 64u);
  // Pixels with the same decoded concept share a color.
  Tensor z = Tensor::matrix(64, 2);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      z.at(8 * r + c, 0) = -3.0 + 6.0 * (c + 0.5) / 8.0;
      z.at(8 * r + c, 1) = 3.0 - 6.0 * (r + 0.5) / 8.0;
    }
  }
  const auto probs = m.decode_attrs(z);
  auto concept_of = [&](std::size_t i) {
    std::vector<int> v;
    for (const auto& p : probs) {
      const auto row = p.row(i);
      v.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    return m.schema().concept_index(v);
  };
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      const bool same_color = std::equal(rgb.begin() + 3 * i, rgb.begin() + 3 * i + 3, rgb.begin() + 3 * j);
      if (concept_of(i) == concept_of(j)) EXPECT_TRUE(same_color);
    }
  }
}

TEST(Cli, EvalRejectsMismatchedClassifier) {
  const fs::path dir = tiny_files("cli_eval");
  ClassifierConfig cfg;
  cfg.trunk = {4};
  cfg.head_hidden = 3;
  Rng rng(2);
  const std::array<std::size_t, 2> other{2, 2};
  ObservationClassifier(AttributeSchema::generic(other), 3, 3, cfg, rng).save(dir / "wrong.jvc");
  EXPECT_EQ(run({"eval", "--model", (dir / "model.jvc").string(), "--classifier", (dir / "wrong.jvc").string(),
                 "--data", (dir / "data.mna").string()}),
            cli::kExitUsage);

  Rng rng2(3);
  const std::array<std::size_t, 2> same{2, 3};
  ObservationClassifier(AttributeSchema::generic(same), 3, 3, cfg, rng2).save(dir / "right.jvc");
  EXPECT_EQ(run({"eval", "--model", (dir / "model.jvc").string(), "--classifier", (dir / "right.jvc").string(),
                 "--data", (dir / "data.mna").string(), "--scenario", "abstract", "--level", "1", "--out",
                 (dir / "ev").string()}),
            cli::kExitOk);
  EXPECT_TRUE(fs::exists(dir / "ev" / "report_abstract-1.json"));
}

TEST(Cli, SweepDryRunListsTheGrid) {
  const fs::path dir = tiny_files("cli_sweep");
  EXPECT_EQ(run({"sweep", "--data", (dir / "data.mna").string(), "--classifier", "c.jvc", "--objective", "jmvae",
                 "--lambda-y", "1,50", "--alpha", "0.1,1", "--dry-run", "--out", (dir / "sw").string()}),
            cli::kExitOk);
  EXPECT_EQ(slurp(dir / "sw" / "sweep.json").find("\"alpha\": 0.1") != std::string::npos, true);
  EXPECT_EQ(run({"sweep", "--data", "d", "--classifier", "c", "--objective", "vae", "--out", (dir / "x").string()}),
            cli::kExitUsage);
}
