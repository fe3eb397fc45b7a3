#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace crowdmac::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
  // Seconds of work done by earlier runs and reused here (cached models).
  double reused_seconds = 0.0;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

// Directory for trained models shared between criteria; set from the command line.
std::filesystem::path& cache_dir();

std::vector<Criterion> fast_criteria();      // 1-5, 10
std::vector<Criterion> training_criteria();  // 6-9

}  // namespace crowdmac::acceptance
