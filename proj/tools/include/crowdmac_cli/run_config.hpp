#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crowdmac/eval.hpp"
#include "crowdmac/masking.hpp"
#include "crowdmac/model.hpp"
#include "crowdmac/simdata.hpp"
#include "crowdmac/train.hpp"

namespace crowdmac::cli {

// Bad config document: unknown key, wrong type, or a section that fails validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string train_path;  // trajectory file; empty simulates from `sim`
  std::string test_path;   // trajectory file; empty simulates from `test_sim`
  int stride = 4;
  int test_stride = 4;
};

struct AblationConfig {
  std::vector<TmFunction> tm_functions = default_tm_grid();
  std::vector<std::vector<MaskTask>> task_combos = default_task_combos();
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  SimConfig sim;
  SimConfig test_sim;
  DataConfig data;
  RasterOptions raster;
  // Cube sizes; frame count and map size follow the eval section.
  int cube_t = 4;
  int cube_h = 8;
  int cube_w = 8;
  ModelConfig model;
  TrainConfig train;
  TDMConfig tdm;
  EvalProtocol eval;
  CorruptionSpec corrupt;
  std::vector<double> robustness_ratios = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  int heatmaps = 2;  // windows exported as PGM by eval
  AblationConfig ablation;

  RunConfig();

  // Model, train and eval sections with the derived fields (grid, seeds) filled in.
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  EvalProtocol eval_protocol() const;

  // Throws ConfigError naming the offending section.
  void validate() const;
};

// Default document, every key present.
std::string default_config_json();
std::string to_json(const RunConfig& cfg);

// Parses a JSON document layered over the defaults. `overrides` are "dotted.key=value"
// strings; a value that is not valid JSON is taken as a string. Unknown keys are rejected.
RunConfig parse_config(const std::string& text, std::span<const std::string> overrides = {});
RunConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

}  // namespace crowdmac::cli
