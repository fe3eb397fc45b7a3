#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>

#include "crowdmac/cdmp.hpp"
#include "crowdmac/checkpoint.hpp"
#include "crowdmac_cli/commands.hpp"
#include "test_support.hpp"

namespace crowdmac::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path run_dir_of(const Result& r) {
  std::smatch m;
  const std::regex re("run directory: (\\S+)");
  if (!std::regex_search(r.out, m, re)) return {};
  return m[1].str();
}

// Small scenes and a tiny model so every command finishes in seconds.
void write_smoke_config(const fs::path& path, const fs::path& out_dir) {
  std::ofstream(path) << R"({
    "output_dir": ")" << out_dir.string() << R"(",
    "sim": {"frames": 60, "seed": 3},
    "test_sim": {"frames": 40, "seed": 4},
    "data": {"stride": 8, "test_stride": 10},
    "model": {"embed_dim": 16, "encoder_depth": 1, "decoder_dim": 16, "decoder_depth": 1, "heads": 2},
    "train": {"epochs": 5, "warmup_epochs": 1, "batch_size": 4},
    "eval": {"heatmaps": 1, "robustness_ratios": [0.0, 0.5]},
    "ablation": {"tm_functions": ["linear"], "task_combos": [["future"]]}
  })";
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { write_smoke_config(config(), dir.path() / "runs"); }
  fs::path config() const { return dir.path() / "smoke.json"; }
  testing::TempDir dir;
};

TEST(Config, DefaultsRoundTrip) {
  const RunConfig d = parse_config(default_config_json());
  EXPECT_EQ(to_json(d), default_config_json());
  EXPECT_EQ(d.model_config().grid, CubeGrid{});
  EXPECT_EQ(d.model_config().obs_frames, 8);
}

TEST(Config, UnknownKeysAreNamed) {
  try {
    parse_config(R"({"train": {"epochz": 3}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.epochz"), std::string::npos);
  }
  EXPECT_THROW(parse_config(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": 5})"), ConfigError);
}

TEST(Config, TypesAndValidationAreChecked) {
  EXPECT_THROW(parse_config(R"({"train": {"epochs": 2.5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"epochs": "ten"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"tdm": {"tm_function": "quartic"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": {"embed_dim": 30}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"sim": {"width": 64}})"), ConfigError);
  EXPECT_THROW(parse_config("not json"), ConfigError);
}

TEST(Config, OverridesApplyAfterTheDocument) {
  const std::vector<std::string> sets{"train.epochs=7", "tdm.tm_function=cubic", "output_dir=elsewhere",
                                      "tdm.task_weights=[1,0,0]"};
  const RunConfig c = parse_config(R"({"train": {"epochs": 3}})", sets);
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.tdm.tm_function, TmFunction::Cubic);
  EXPECT_EQ(c.output_dir, "elsewhere");
  EXPECT_EQ(c.tdm.task_weights[1], 0.0);
  const std::vector<std::string> bad{"train.epochz=1"};
  EXPECT_THROW(parse_config("{}", bad), ConfigError);
  const std::vector<std::string> malformed{"train.epochs"};
  EXPECT_THROW(parse_config("{}", malformed), ConfigError);
}

TEST(Cli, HelpListsEveryFlagAndSubcommand) {
  const Result r = run({"--help-all"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* s : {"simulate", "rasterize", "train", "eval", "corrupt", "ablate-tm", "ablate-tasks", "mask-viz",
                        "--config", "--set", "--miss-ratio", "--checkpoint", "--resume", "--lambda", "--sweep"}) {
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  }
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(run({"simulate", "--set", "sim.nope=1"}).code, kExitConfig);
  EXPECT_EQ(run({"rasterize", "--input", "/nonexistent/file.csv"}).code, kExitRuntime);
}

TEST_F(CliTest, InvalidKeyMessageNamesTheKey) {
  const Result r = run({"simulate", "-c", config().string(), "--set", "sim.agents=3"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("sim.agents"), std::string::npos);
}

TEST_F(CliTest, SimulateIsDeterministicAndLoadable) {
  const fs::path a = dir / "a.csv";
  const fs::path b = dir / "b.csv";
  ASSERT_EQ(run({"simulate", "-c", config().string(), "-o", a.string()}).code, kExitOk);
  ASSERT_EQ(run({"simulate", "-c", config().string(), "-o", b.string()}).code, kExitOk);
  EXPECT_EQ(slurp(a), slurp(b));
  const TrajectoryDataset ds = load_trajectories(a);
  EXPECT_FALSE(ds.empty());
  EXPECT_EQ(ds.frame_range()->count(), 60);

  const fs::path c = dir / "c.csv";
  ASSERT_EQ(run({"simulate", "-c", config().string(), "-o", c.string(), "--set", "sim.seed=99"}).code, kExitOk);
  EXPECT_NE(slurp(a), slurp(c));
}

TEST_F(CliTest, RasterizeAndCorrupt) {
  const fs::path traj = dir / "t.csv";
  ASSERT_EQ(run({"simulate", "-c", config().string(), "-o", traj.string()}).code, kExitOk);
  const fs::path vol = dir / "d.cdmp";
  ASSERT_EQ(run({"rasterize", "-c", config().string(), "-i", traj.string(), "-o", vol.string()}).code, kExitOk);
  const DensitySequence seq = read_cdmp(vol);
  EXPECT_EQ(seq.length(), 60);
  EXPECT_EQ(seq.width(), 80);

  const fs::path same = dir / "same.csv";
  ASSERT_EQ(run({"corrupt", "-c", config().string(), "-i", traj.string(), "-o", same.string(), "--miss-ratio", "0"}).code,
            kExitOk);
  EXPECT_EQ(load_trajectories(same), load_trajectories(traj));
  const fs::path fewer = dir / "fewer.csv";
  ASSERT_EQ(
      run({"corrupt", "-c", config().string(), "-i", traj.string(), "-o", fewer.string(), "--miss-ratio", "0.5"}).code,
      kExitOk);
  EXPECT_LT(load_trajectories(fewer).size(), load_trajectories(traj).size());
  EXPECT_EQ(run({"corrupt", "-c", config().string(), "-i", traj.string(), "--miss-ratio", "1.5"}).code, kExitConfig);
}

TEST_F(CliTest, TrainWritesCheckpointAndLossCurveAndResumes) {
  const auto t0 = std::chrono::steady_clock::now();
  const Result r = run({"train", "-c", config().string()});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_LT(seconds, 60.0);
  const fs::path run1 = run_dir_of(r);
  ASSERT_TRUE(fs::exists(run1 / "model.ckpt"));
  ASSERT_TRUE(fs::exists(run1 / "config.json"));

  std::ifstream csv(run1 / "loss.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "epoch,mean_loss,lr,lambda");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 5);

  const ModelState first = load_checkpoint(run1 / "model.ckpt");
  EXPECT_EQ(first.epoch, 5);
  const Result resumed =
      run({"train", "-c", config().string(), "--set", "train.epochs=7", "--resume", (run1 / "model.ckpt").string()});
  ASSERT_EQ(resumed.code, kExitOk) << resumed.err;
  const fs::path run2 = run_dir_of(resumed);
  EXPECT_NE(run1, run2);
  const ModelState second = load_checkpoint(run2 / "model.ckpt");
  EXPECT_EQ(second.epoch, 7);
  EXPECT_GT(second.step, first.step);
  // The first run's outputs are untouched.
  EXPECT_EQ(load_checkpoint(run1 / "model.ckpt"), first);
}

TEST_F(CliTest, EvalFormatsAndMissRatioFlag) {
  const Result trained = run({"train", "-c", config().string(), "--set", "train.epochs=1"});
  ASSERT_EQ(trained.code, kExitOk) << trained.err;
  const std::string ckpt = (run_dir_of(trained) / "model.ckpt").string();

  const Result plain = run({"eval", "-c", config().string(), "--checkpoint", ckpt});
  ASSERT_EQ(plain.code, kExitOk) << plain.err;
  const Result zero = run({"eval", "-c", config().string(), "--checkpoint", ckpt, "--miss-ratio", "0"});
  ASSERT_EQ(zero.code, kExitOk);
  const std::string metrics = slurp(run_dir_of(plain) / "metrics.csv");
  EXPECT_EQ(metrics, slurp(run_dir_of(zero) / "metrics.csv"));
  EXPECT_TRUE(std::regex_match(metrics, std::regex("ad_js,fd_js\n[0-9]+\\.[0-9]{6},[0-9]+\\.[0-9]{6}\n")))
      << metrics;

  const std::string pgm = slurp(run_dir_of(plain) / "window000_pred_last.pgm");
  EXPECT_EQ(pgm.rfind("P5\n80 80\n255\n", 0), 0u);

  const Result base = run({"eval", "-c", config().string(), "--baseline", "persistence", "--sweep"});
  ASSERT_EQ(base.code, kExitOk) << base.err;
  EXPECT_EQ(slurp(run_dir_of(base) / "robustness.csv").rfind("miss_ratio,ad_js,fd_js\n0.000000,", 0), 0u);
  EXPECT_EQ(run({"eval", "-c", config().string()}).code, kExitConfig);
}

TEST_F(CliTest, AblationTablesAreWritten) {
  const Result tm = run({"ablate-tm", "-c", config().string(), "--set", "train.epochs=1"});
  ASSERT_EQ(tm.code, kExitOk) << tm.err;
  const std::string table = slurp(run_dir_of(tm) / "table.csv");
  EXPECT_EQ(table.rfind("cell_id,config_json,ad_js,fd_js,train_seconds\ntm-linear,", 0), 0u);
  const Result tasks = run({"ablate-tasks", "-c", config().string(), "--set", "train.epochs=1"});
  ASSERT_EQ(tasks.code, kExitOk) << tasks.err;
  EXPECT_NE(tasks.out.find("tasks-future"), std::string::npos);
  EXPECT_EQ(run({"ablate-tasks", "-c", config().string(), "--set", R"(ablation.task_combos=[["interpolation"]])"}).code,
            kExitRuntime);
}

TEST_F(CliTest, MaskVizWritesOneSidecarPerTask) {
  const Result r = run({"mask-viz", "-c", config().string(), "--lambda", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const fs::path d = run_dir_of(r);
  for (const char* t : {"future", "past", "interpolation"}) {
    EXPECT_TRUE(fs::exists(d / (std::string("mask_") + t + ".cdmp"))) << t;
  }
  const CdmpVolume fut = read_cdmp_volume(d / "mask_future.cdmp");
  ASSERT_EQ(fut.frames, 5u);
  ASSERT_EQ(fut.height, 10u);
  ASSERT_EQ(fut.width, 10u);
  for (int r2 = 2; r2 < 5; ++r2) {
    for (int s = 0; s < 100; ++s) EXPECT_EQ(fut.values[static_cast<std::size_t>(r2) * 100 + s], 1.0f);
  }
  for (int r2 = 0; r2 < 2; ++r2) {
    double masked = 0;
    for (int s = 0; s < 100; ++s) masked += fut.values[static_cast<std::size_t>(r2) * 100 + s];
    const double gamma = tm_ratio(r2 + 1, 2, 3.0, MaskTask::FuturePrediction);
    EXPECT_EQ(masked, std::floor(gamma * 100));
  }
}

TEST(RunDir, NeverReusesADirectory) {
  testing::TempDir dir;
  const fs::path a = make_run_dir(dir.path(), "x");
  const fs::path b = make_run_dir(dir.path(), "x");
  EXPECT_NE(a, b);
  EXPECT_TRUE(fs::is_directory(a));
  EXPECT_TRUE(fs::is_directory(b));
}

}  // namespace
}  // namespace crowdmac::cli
