#include <string>
#include <vector>

#include "nest/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nest::run_command(args);
}
