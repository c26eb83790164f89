#include <iostream>
#include <string>
#include <vector>

#include "ucg/harness/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ucg::harness::run_cli(args, std::cout, std::cerr);
}
