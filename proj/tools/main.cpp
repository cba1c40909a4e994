#include <iostream>

#include "carbonwatch/cli.hpp"

int main(int argc, char** argv) {
  return carbonwatch::run_cli(argc, argv, std::cout, std::cerr);
}
