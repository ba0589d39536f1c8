#include <string>
#include <vector>

#include "sgae/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sgae::run_cli(args);
}
