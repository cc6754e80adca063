#include <iostream>
#include <string>
#include <vector>

#include "tdl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return tdl::cli::run(args, std::cout, std::cerr);
}
