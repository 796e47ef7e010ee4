#include <string>
#include <vector>

#include "longctx/harness.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return longctx::run_cli(args);
}
