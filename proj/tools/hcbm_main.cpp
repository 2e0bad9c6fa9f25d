#include <iostream>
#include <string>
#include <vector>

#include "harness.hpp"
#include "hcbm/runtime.hpp"

int main(int argc, char** argv) {
  hcbm::tune_allocator();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return hcbm::harness::run(args, std::cout, std::cerr);
}
