#include <iostream>

#include "mlqc/cli.hpp"

int main(int argc, char** argv) {
  return mlqc::cli::run(argc, argv, std::cout, std::cerr);
}
