#include <iostream>
#include <string>
#include <vector>

#include "crowdmac_cli/commands.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return crowdmac::cli::run_cli(args, std::cout, std::cerr);
}
