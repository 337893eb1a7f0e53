#include <iostream>
#include <string>
#include <vector>

#include "mcpq/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mcpq::run_cli(args, std::cout, std::cerr);
}
