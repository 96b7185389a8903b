#include <iostream>

#include "smdris/cli.hpp"

int main(int argc, char** argv) {
  return smdris::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
