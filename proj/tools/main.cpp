#include <vector>

#include "eegtext/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return eegtext::cli::run(args);
}
