#include <iostream>
#include <string>
#include <vector>

#include "windgen/cli.hpp"

int main(int argc, char** argv) {
  return windgen::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
