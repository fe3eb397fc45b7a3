#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "crowdmac_cli/run_config.hpp"

namespace crowdmac::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

// Runs the command line `args` (without the program name). Errors are reported on `err`
// and mapped to kExitConfig (bad flags or config) or kExitRuntime.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Creates <base>/<command>-YYYYmmdd-HHMMSS, adding a numeric suffix when that exists.
std::filesystem::path make_run_dir(const std::filesystem::path& base, const std::string& command);

// Training and test material described by the config: trajectory files when given,
// simulated scenes otherwise.
std::vector<TrajectoryWindow> train_windows(const RunConfig& cfg);
std::vector<TrajectoryWindow> test_windows(const RunConfig& cfg);
std::vector<DensitySequence> rasterize_windows(std::span<const TrajectoryWindow> windows, const RunConfig& cfg);

AblationSetup ablation_setup(const RunConfig& cfg);

}  // namespace crowdmac::cli
