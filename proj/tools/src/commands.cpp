#include "crowdmac_cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "crowdmac/cdmp.hpp"
#include "crowdmac/checkpoint.hpp"
#include "crowdmac/errors.hpp"

namespace crowdmac::cli {
namespace {

namespace fs = std::filesystem;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

TrajectoryDataset dataset_from(const std::string& path, const SimConfig& sim) {
  return path.empty() ? simulate_crowd(sim) : load_trajectories(path);
}

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON run config (defaults apply when omitted)");
    app->add_option("--set", overrides, "Override a config value, e.g. --set train.epochs=5")->take_all();
    app->add_option("--output-dir", out_dir, "Base directory for run folders (overrides output_dir)");
  }

  RunConfig load() const {
    RunConfig cfg = config_path.empty() ? parse_config("{}", overrides) : load_config(config_path, overrides);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    return cfg;
  }
};

fs::path start_run(const RunConfig& cfg, const std::string& command, std::ostream& out) {
  const fs::path dir = make_run_dir(cfg.output_dir, command);
  write_text(dir / "config.json", to_json(cfg));
  out << "run directory: " << dir.string() << "\n";
  return dir;
}

int cmd_simulate(const Common& common, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = common.load();
  fs::path target = out_path;
  if (target.empty()) target = start_run(cfg, "simulate", out) / "trajectories.csv";
  const TrajectoryDataset ds = simulate_crowd(cfg.sim);
  save_trajectories(ds, target);
  out << "wrote " << ds.size() << " records to " << target.string() << "\n";
  return kExitOk;
}

int cmd_rasterize(const Common& common, const std::string& input, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = common.load();
  const TrajectoryDataset ds = load_trajectories(input);
  const auto range = ds.frame_range();
  if (!range) throw ParameterError("trajectory file has no frames");
  fs::path target = out_path;
  if (target.empty()) target = start_run(cfg, "rasterize", out) / "density.cdmp";
  const DensitySequence seq = rasterize_sequence(ds, *range, cfg.eval.width, cfg.eval.height, cfg.raster);
  write_cdmp(target, seq);
  out << "wrote " << seq.length() << " frames of " << cfg.eval.width << "x" << cfg.eval.height << " to "
      << target.string() << "\n";
  return kExitOk;
}

int cmd_corrupt(const Common& common, const std::string& input, const std::string& out_path,
                std::optional<double> miss_ratio, std::ostream& out) {
  RunConfig cfg = common.load();
  if (miss_ratio) cfg.corrupt.miss_ratio = *miss_ratio;
  cfg.validate();
  const TrajectoryDataset ds = load_trajectories(input);
  const auto range = ds.frame_range();
  fs::path target = out_path;
  if (target.empty()) target = start_run(cfg, "corrupt", out) / "trajectories.csv";
  const TrajectoryDataset kept = range ? corrupt_missdetect(ds, cfg.corrupt, *range) : ds;
  save_trajectories(kept, target);
  out << "kept " << kept.size() << " of " << ds.size() << " records; wrote " << target.string() << "\n";
  return kExitOk;
}

int cmd_train(const Common& common, const std::string& resume, std::ostream& out) {
  const RunConfig cfg = common.load();
  const fs::path dir = start_run(cfg, "train", out);
  const auto windows = train_windows(cfg);
  const auto data = rasterize_windows(windows, cfg);
  out << "training on " << data.size() << " windows\n";

  std::ofstream csv(dir / "loss.csv");
  csv << "epoch,mean_loss,lr,lambda\n";
  const auto on_epoch = [&](const EpochStats& s, const ModelState& st) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.8e,%.8e,%.6f\n", s.epoch, s.mean_loss, s.lr, s.lambda);
    csv << line << std::flush;
    out << "epoch " << s.epoch << " step " << st.step << " loss " << s.mean_loss << "\n" << std::flush;
  };

  TrainResult result;
  if (!resume.empty()) {
    ModelState state = load_checkpoint(resume);
    if (state.config != cfg.model_config()) throw ParameterError("checkpoint model config differs from the run config");
    out << "resuming at epoch " << state.epoch << ", step " << state.step << "\n";
    result = train(data, std::move(state), cfg.train_config(), cfg.tdm, on_epoch);
  } else {
    result = train(data, cfg.model_config(), cfg.train_config(), cfg.tdm, on_epoch);
  }
  save_checkpoint(dir / "model.ckpt", result.state);
  out << "checkpoint: " << (dir / "model.ckpt").string() << "\n";
  return kExitOk;
}

void write_metrics(const fs::path& dir, const EvalResult& r) {
  write_text(dir / "metrics.csv", "ad_js,fd_js\n" + fixed6(r.aggregate.ad_js) + "," + fixed6(r.aggregate.fd_js) + "\n");
  std::string steps = "step,js\n";
  for (std::size_t t = 0; t < r.aggregate.per_step_js.size(); ++t) {
    steps += std::to_string(t + 1) + "," + fixed6(r.aggregate.per_step_js[t]) + "\n";
  }
  write_text(dir / "per_step.csv", steps);
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& baseline,
             std::optional<double> miss_ratio, bool sweep, std::ostream& out) {
  RunConfig cfg = common.load();
  if (miss_ratio) cfg.eval.miss_ratio = *miss_ratio;
  cfg.validate();
  if (checkpoint.empty() == baseline.empty()) {
    throw ConfigError("eval needs exactly one of --checkpoint or --baseline");
  }
  if (!baseline.empty() && baseline != "persistence") throw ConfigError("unknown baseline '" + baseline + "'");

  Forecaster forecaster;
  if (!checkpoint.empty()) {
    const ModelState state = load_checkpoint(checkpoint);
    if (state.config.grid.width != cfg.eval.width || state.config.grid.height != cfg.eval.height ||
        state.config.obs_frames != cfg.eval.obs_frames || state.config.pred_frames() != cfg.eval.pred_frames) {
      throw ParameterError("checkpoint geometry does not match the eval section");
    }
    forecaster = model_forecaster(state);
  } else {
    forecaster = persistence_forecaster(cfg.eval.pred_frames);
  }

  const fs::path dir = start_run(cfg, "eval", out);
  const auto windows = test_windows(cfg);
  const EvalProtocol protocol = cfg.eval_protocol();
  const auto samples = prepare_samples(windows, protocol);
  const EvalResult r = evaluate(forecaster, samples, protocol.epsilon);
  write_metrics(dir, r);
  out << "ad_js " << fixed6(r.aggregate.ad_js) << " fd_js " << fixed6(r.aggregate.fd_js) << " over "
      << samples.size() << " windows\n";

  const int n_maps = std::min<int>(cfg.heatmaps, static_cast<int>(samples.size()));
  for (int i = 0; i < n_maps; ++i) {
    const DensitySequence pred = forecaster(samples[static_cast<std::size_t>(i)].observed);
    const auto& gt = samples[static_cast<std::size_t>(i)].future;
    char name[64];
    std::snprintf(name, sizeof name, "window%03d_pred_last.pgm", i);
    write_pgm(dir / name, pred.frames.back());
    std::snprintf(name, sizeof name, "window%03d_true_last.pgm", i);
    write_pgm(dir / name, gt.frames.back());
  }

  if (sweep) {
    const auto curve = robustness_sweep(forecaster, windows, protocol, cfg.robustness_ratios);
    write_robustness_csv(dir / "robustness.csv", curve);
    for (const auto& p : curve) out << "miss_ratio " << fixed6(p.miss_ratio) << " ad_js " << fixed6(p.ad_js) << "\n";
  }
  return kExitOk;
}

int cmd_ablate(const Common& common, bool tm, std::ostream& out) {
  const RunConfig cfg = common.load();
  const fs::path dir = start_run(cfg, tm ? "ablate-tm" : "ablate-tasks", out);
  const AblationSetup setup = ablation_setup(cfg);
  const auto on_cell = [&](const AblationRow& row) {
    out << row.cell_id << " ad_js " << fixed6(row.ad_js) << " fd_js " << fixed6(row.fd_js) << "\n" << std::flush;
  };
  const auto rows = tm ? ablate_tm_functions(setup, cfg.ablation.tm_functions, on_cell)
                       : ablate_multitask(setup, cfg.ablation.task_combos, on_cell);
  write_ablation_csv(dir / "table.csv", rows);
  out << format_ablation_table(rows);
  return kExitOk;
}

int cmd_mask_viz(const Common& common, std::optional<double> lambda, std::ostream& out) {
  const RunConfig cfg = common.load();
  const fs::path dir = start_run(cfg, "mask-viz", out);
  const ModelConfig model = cfg.model_config();
  const auto windows = train_windows(cfg);
  if (windows.empty()) throw ParameterError("no training window to take densities from");
  const std::vector<TrajectoryWindow> first{windows.front()};
  const DensitySequence seq = rasterize_windows(first, cfg).front();
  const DensityTable table = accumulated_density(seq, model.grid);
  const double lam = lambda.value_or(cfg.tdm.lambda_max);
  for (const MaskTask task : kAllTasks) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(task)));
    const MaskPlan plan = build_mask_plan(task, table, cfg.tdm, lam, model.obs_slices(), rng);
    const fs::path file = dir / ("mask_" + std::string(to_string(task)) + ".cdmp");
    write_mask_sidecar(file, plan, model.grid);
    out << to_string(task) << ": " << plan.masked_count() << " of " << plan.mask.size() << " tokens masked, "
        << file.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

fs::path make_run_dir(const fs::path& base, const std::string& command) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << command << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::create_directories(base);
  fs::path dir = base / stamp.str();
  for (int n = 2; !fs::create_directory(dir); ++n) dir = base / (stamp.str() + "-" + std::to_string(n));
  return dir;
}

std::vector<TrajectoryWindow> train_windows(const RunConfig& cfg) {
  return window_split(dataset_from(cfg.data.train_path, cfg.sim), cfg.eval.obs_frames, cfg.eval.pred_frames,
                      cfg.data.stride);
}

std::vector<TrajectoryWindow> test_windows(const RunConfig& cfg) {
  return window_split(dataset_from(cfg.data.test_path, cfg.test_sim), cfg.eval.obs_frames, cfg.eval.pred_frames,
                      cfg.data.test_stride);
}

std::vector<DensitySequence> rasterize_windows(std::span<const TrajectoryWindow> windows, const RunConfig& cfg) {
  std::vector<DensitySequence> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(rasterize_sequence(w, cfg.eval.width, cfg.eval.height, cfg.raster));
  return out;
}

AblationSetup ablation_setup(const RunConfig& cfg) {
  AblationSetup s;
  const auto train = train_windows(cfg);
  s.train_set = rasterize_windows(train, cfg);
  s.test_windows = test_windows(cfg);
  s.model = cfg.model_config();
  s.train = cfg.train_config();
  s.tdm = cfg.tdm;
  s.protocol = cfg.eval_protocol();
  return s;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked crowd-density completion: simulate, train, evaluate and ablate.", "crowdmac"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  std::string out_path;
  std::string input;
  std::string checkpoint;
  std::string baseline;
  std::string resume;
  std::optional<double> miss_ratio;
  std::optional<double> lambda;
  bool sweep = false;
  bool print_defaults = false;

  auto* simulate = app.add_subcommand("simulate", "Write a simulated trajectory file");
  common.attach(simulate);
  simulate->add_option("-o,--out", out_path, "Output file (default: inside a new run directory)");

  auto* rasterize = app.add_subcommand("rasterize", "Rasterize a trajectory file into a CDMP density volume");
  common.attach(rasterize);
  rasterize->add_option("-i,--input", input, "Trajectory file")->required();
  rasterize->add_option("-o,--out", out_path, "Output .cdmp file");

  auto* corrupt = app.add_subcommand("corrupt", "Drop records to simulate detector misses");
  common.attach(corrupt);
  corrupt->add_option("-i,--input", input, "Trajectory file")->required();
  corrupt->add_option("-o,--out", out_path, "Output trajectory file");
  corrupt->add_option("--miss-ratio", miss_ratio, "Override corrupt.miss_ratio")->check(CLI::Range(0.0, 1.0));

  auto* train_cmd = app.add_subcommand("train", "Train a model; writes model.ckpt and loss.csv");
  common.attach(train_cmd);
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint up to train.epochs");

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or baseline on the test windows");
  common.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
  eval_cmd->add_option("--baseline", baseline, "Baseline instead of a model (persistence)");
  eval_cmd->add_option("--miss-ratio", miss_ratio, "Corrupt observations with this miss ratio")
      ->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_flag("--sweep", sweep, "Also run the robustness sweep over eval.robustness_ratios");

  auto* ablate_tm = app.add_subcommand("ablate-tm", "Masking-ratio function ablation");
  common.attach(ablate_tm);
  auto* ablate_tasks = app.add_subcommand("ablate-tasks", "Multi-task masking ablation");
  common.attach(ablate_tasks);

  auto* mask_viz = app.add_subcommand("mask-viz", "Write one mask-plan sidecar per task");
  common.attach(mask_viz);
  mask_viz->add_option("--lambda", lambda, "Lambda used for the TM ratio (default tdm.lambda_max)");

  auto* config_cmd = app.add_subcommand("config", "Print the resolved config document");
  common.attach(config_cmd);
  config_cmd->add_flag("--defaults", print_defaults, "Print the built-in defaults");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "crowdmac: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common, out_path, out);
    if (rasterize->parsed()) return cmd_rasterize(common, input, out_path, out);
    if (corrupt->parsed()) return cmd_corrupt(common, input, out_path, miss_ratio, out);
    if (train_cmd->parsed()) return cmd_train(common, resume, out);
    if (eval_cmd->parsed()) return cmd_eval(common, checkpoint, baseline, miss_ratio, sweep, out);
    if (ablate_tm->parsed()) return cmd_ablate(common, true, out);
    if (ablate_tasks->parsed()) return cmd_ablate(common, false, out);
    if (mask_viz->parsed()) return cmd_mask_viz(common, lambda, out);
    if (config_cmd->parsed()) {
      out << (print_defaults ? default_config_json() : to_json(common.load()));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "crowdmac: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "crowdmac: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace crowdmac::cli
