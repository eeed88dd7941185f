#include <iostream>
#include <string>
#include <vector>

#include "psmc/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return psmc::cli::run_command(args, std::cout, std::cerr);
}
