#include <iostream>
#include <string>
#include <vector>

#include "entvec/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return entvec::run_cli(args, std::cout, std::cerr);
}
