#include <iostream>
#include <string>
#include <vector>

#include "nvsense/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return nvsense::run_cli(args, std::cout, std::cerr);
}
