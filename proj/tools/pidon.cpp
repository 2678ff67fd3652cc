#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "pidon/cli/commands.hpp"

int main(int argc, char** argv) {
  // Tape nodes are allocated and freed every step; keep the heap from
  // returning memory to the OS between iterations.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
  std::vector<std::string> args(argv + 1, argv + argc);
  return pidon::cli::run_cli(args, std::cout, std::cerr);
}
