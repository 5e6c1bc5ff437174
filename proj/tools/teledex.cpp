#include "teledex/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return teledex::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
