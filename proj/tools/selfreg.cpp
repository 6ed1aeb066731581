#include <iostream>

#include "selfreg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return selfreg::cli_main(args, std::cout, std::cerr);
}
