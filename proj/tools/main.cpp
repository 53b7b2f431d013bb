#include <iostream>

#include "grpo_prm/cli.hpp"

int main(int argc, char** argv) {
  return grpo_prm::run_cli(argc, argv, std::cout, std::cerr);
}
