#include <iostream>

#include "mst/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mst::cli::run(args, std::cout, std::cerr);
}
