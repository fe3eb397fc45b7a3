#include "crowdmac/eval.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "crowdmac/errors.hpp"
#include "crowdmac/random.hpp"

namespace crowdmac {

void EvalProtocol::validate() const {
  if (obs_frames < 1 || pred_frames < 1) throw ParameterError("eval: obs_frames and pred_frames must be >= 1");
  if (width < 1 || height < 1) throw ParameterError("eval: width and height must be >= 1");
  if (!(raster.sigma > 0.0)) throw ParameterError("eval: sigma must be positive");
  if (!(epsilon > 0.0)) throw ParameterError("eval: epsilon must be positive");
  if (!(miss_ratio >= 0.0 && miss_ratio <= 1.0)) throw ParameterError("eval: miss_ratio must lie in [0, 1]");
}

std::vector<EvalSample> prepare_samples(std::span<const TrajectoryWindow> windows, const EvalProtocol& protocol) {
  protocol.validate();
  if (windows.empty()) throw ProtocolError("evaluation needs at least one window");
  std::vector<EvalSample> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const TrajectoryWindow& w = windows[i];
    if (w.obs_frames != protocol.obs_frames || w.pred_frames != protocol.pred_frames) {
      throw ParameterError("window " + std::to_string(i) + " horizons differ from the evaluation protocol");
    }
    const CorruptionSpec spec{protocol.miss_ratio, derive_seed(protocol.seed, i), protocol.whole_track};
    const TrajectoryWindow input = corrupt_missdetect(w, spec);
    const FrameRange full = w.full_range();
    EvalSample s;
    s.observed = rasterize_sequence(input.data, input.observation_range(), protocol.width, protocol.height,
                                    protocol.raster);
    s.future = rasterize_sequence(w.data, {full.first + w.obs_frames, full.last}, protocol.width, protocol.height,
                                  protocol.raster);
    out.push_back(std::move(s));
  }
  return out;
}

EvalResult evaluate(const Forecaster& forecaster, std::span<const EvalSample> samples, double epsilon) {
  if (samples.empty()) throw ProtocolError("evaluation needs at least one window");
  EvalResult result;
  result.per_window.reserve(samples.size());
  for (const EvalSample& s : samples) {
    result.per_window.push_back(score_forecast(forecaster(s.observed), s.future, epsilon));
  }
  const double n = static_cast<double>(samples.size());
  MetricReport& agg = result.aggregate;
  agg.per_step_js.assign(result.per_window.front().per_step_js.size(), 0.0);
  for (const MetricReport& r : result.per_window) {
    agg.ad_js += r.ad_js;
    agg.fd_js += r.fd_js;
    for (std::size_t t = 0; t < agg.per_step_js.size(); ++t) agg.per_step_js[t] += r.per_step_js[t];
  }
  agg.ad_js /= n;
  agg.fd_js /= n;
  for (double& v : agg.per_step_js) v /= n;
  return result;
}

EvalResult evaluate(const Forecaster& forecaster, std::span<const TrajectoryWindow> windows,
                    const EvalProtocol& protocol) {
  const auto samples = prepare_samples(windows, protocol);
  return evaluate(forecaster, samples, protocol.epsilon);
}

EvalResult evaluate(const ModelState& state, std::span<const TrajectoryWindow> windows, const EvalProtocol& protocol) {
  const ModelConfig& c = state.config;
  if (protocol.obs_frames != c.obs_frames || protocol.pred_frames != c.pred_frames() ||
      protocol.width != c.grid.width || protocol.height != c.grid.height) {
    throw ParameterError("evaluation protocol geometry does not match the model");
  }
  return evaluate(model_forecaster(state), windows, protocol);
}

Forecaster model_forecaster(const ModelState& state) {
  auto shared = std::make_shared<const ModelState>(state);
  return [shared](const DensitySequence& observed) { return predict_future(observed, *shared); };
}

DensitySequence persistence_baseline(const DensitySequence& observed, int pred_frames) {
  if (observed.frames.empty()) throw ParameterError("persistence_baseline: no observed frames");
  if (pred_frames < 1) throw ParameterError("persistence_baseline: pred_frames must be >= 1");
  DensitySequence out;
  out.frame_interval = observed.frame_interval;
  out.frames.assign(static_cast<std::size_t>(pred_frames), observed.frames.back());
  return out;
}

Forecaster persistence_forecaster(int pred_frames) {
  return [pred_frames](const DensitySequence& observed) { return persistence_baseline(observed, pred_frames); };
}

std::vector<RobustnessPoint> robustness_sweep(const Forecaster& forecaster, std::span<const TrajectoryWindow> windows,
                                              const EvalProtocol& protocol, std::span<const double> ratios) {
  std::vector<RobustnessPoint> curve;
  for (const double p : ratios) {
    EvalProtocol proto = protocol;
    proto.miss_ratio = p;
    const EvalResult r = evaluate(forecaster, windows, proto);
    curve.push_back({p, r.aggregate.ad_js, r.aggregate.fd_js});
  }
  return curve;
}

void write_robustness_csv(const std::filesystem::path& path, std::span<const RobustnessPoint> curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "miss_ratio,ad_js,fd_js\n";
  char line[128];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f\n", p.miss_ratio, p.ad_js, p.fd_js);
    out << line;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

std::string cell_json(const TDMConfig& tdm) {
  nlohmann::json j = {{"tm_function", std::string(to_string(tdm.tm_function))},
                      {"lambda_max", tdm.lambda_max},
                      {"tau", tdm.tau},
                      {"dm_enabled", tdm.dm_enabled},
                      {"task_weights", tdm.task_weights}};
  if (tdm.tm_function == TmFunction::Constant) j["constant_ratio"] = tdm.constant_ratio;
  return j.dump();
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<std::pair<double, double>> tm_reference(TmFunction fn) {
  switch (fn) {
    case TmFunction::Constant: return std::pair{0.077, 0.136};
    case TmFunction::SquareRoot: return std::pair{0.076, 0.138};
    case TmFunction::Linear: return std::pair{0.074, 0.137};
    case TmFunction::Square: return std::pair{0.071, 0.129};
    case TmFunction::Cubic: return std::pair{0.075, 0.134};
    case TmFunction::Exponential: return std::pair{0.068, 0.129};
  }
  return std::nullopt;
}

std::optional<std::pair<double, double>> task_reference(const std::array<double, 3>& w) {
  const bool past = w[static_cast<int>(MaskTask::PastPrediction)] > 0.0;
  const bool interp = w[static_cast<int>(MaskTask::Interpolation)] > 0.0;
  if (!past && !interp) return std::pair{0.080, 0.146};
  if (!past && interp) return std::pair{0.070, 0.129};
  if (past && !interp) return std::pair{0.075, 0.143};
  return std::pair{0.068, 0.129};
}

}  // namespace

std::vector<AblationRow> run_ablation(const AblationSetup& setup, std::span<const AblationCell> cells,
                                      const CellCallback& on_cell) {
  if (cells.empty()) throw ProtocolError("ablation grid is empty");
  if (setup.test_windows.empty()) throw ProtocolError("evaluation needs at least one window");
  const auto samples = prepare_samples(setup.test_windows, setup.protocol);
  std::vector<AblationRow> rows;
  for (const AblationCell& cell : cells) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult trained = train(setup.train_set, setup.model, setup.train, cell.tdm);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const EvalResult r = evaluate(model_forecaster(trained.state), samples, setup.protocol.epsilon);
    AblationRow row{cell.id, cell_json(cell.tdm), r.aggregate.ad_js, r.aggregate.fd_js, seconds, std::nullopt};
    rows.push_back(row);
    if (on_cell) on_cell(rows.back());
  }
  return rows;
}

std::vector<TmFunction> default_tm_grid() {
  return {TmFunction::Constant, TmFunction::SquareRoot, TmFunction::Linear,
          TmFunction::Square,   TmFunction::Cubic,      TmFunction::Exponential};
}

std::vector<AblationRow> ablate_tm_functions(const AblationSetup& setup, std::span<const TmFunction> functions,
                                             const CellCallback& on_cell) {
  std::vector<AblationCell> cells;
  for (const TmFunction fn : functions) {
    AblationCell cell{"tm-" + std::string(to_string(fn)), setup.tdm};
    cell.tdm.tm_function = fn;
    cells.push_back(std::move(cell));
  }
  auto rows = run_ablation(setup, cells, on_cell);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].reference = tm_reference(functions[i]);
  return rows;
}

std::vector<std::vector<MaskTask>> default_task_combos() {
  using enum MaskTask;
  return {{FuturePrediction},
          {FuturePrediction, Interpolation},
          {FuturePrediction, PastPrediction},
          {FuturePrediction, Interpolation, PastPrediction}};
}

std::array<double, 3> task_weights_for(std::span<const MaskTask> combo) {
  if (combo.empty()) throw ParameterError("task combination is empty");
  std::array<double, 3> w{0.0, 0.0, 0.0};
  for (const MaskTask t : combo) w[static_cast<int>(t)] = 1.0;
  const double n = w[0] + w[1] + w[2];
  for (double& v : w) v /= n;
  return w;
}

std::vector<AblationRow> ablate_multitask(const AblationSetup& setup, std::span<const std::vector<MaskTask>> combos,
                                          const CellCallback& on_cell) {
  std::vector<AblationCell> cells;
  for (const auto& combo : combos) {
    if (std::find(combo.begin(), combo.end(), MaskTask::FuturePrediction) == combo.end()) {
      throw ProtocolError("every task combination must include future prediction");
    }
    std::string id = "tasks";
    for (const MaskTask t : combo) id += (id.size() == 5 ? "-" : "+") + std::string(to_string(t));
    AblationCell cell{id, setup.tdm};
    cell.tdm.task_weights = task_weights_for(combo);
    cells.push_back(std::move(cell));
  }
  auto rows = run_ablation(setup, cells, on_cell);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].reference = task_reference(cells[i].tdm.task_weights);
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "cell_id,config_json,ad_js,fd_js,train_seconds\n";
  char nums[128];
  for (const auto& r : rows) {
    std::snprintf(nums, sizeof nums, ",%.6f,%.6f,%.3f\n", r.ad_js, r.fd_js, r.train_seconds);
    out << r.cell_id << ',' << csv_quote(r.config_json) << nums;
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-44s %10s %10s   %s\n", "cell", "AD_JS", "FD_JS", "reference AD/FD (SDD)");
  out += line;
  for (const auto& r : rows) {
    std::string ref = "-";
    if (r.reference) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3f / %.3f", r.reference->first, r.reference->second);
      ref = buf;
    }
    std::snprintf(line, sizeof line, "%-44s %10.6f %10.6f   %s\n", r.cell_id.c_str(), r.ad_js, r.fd_js, ref.c_str());
    out += line;
  }
  return out;
}

}  // namespace crowdmac
