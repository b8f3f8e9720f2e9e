#include <iostream>
#include <string>
#include <vector>

#include "morap/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return morap::runCli(args, std::cout, std::cerr);
}
