#include <iostream>
#include <string>
#include <vector>

#include "b2d/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return b2d::cli::run(args, std::cout, std::cerr);
}
