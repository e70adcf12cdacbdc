#include <iostream>

#include "semdial/cli.hpp"

int main(int argc, char** argv) {
  return semdial::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
