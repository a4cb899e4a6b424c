#include <string>
#include <vector>

#include "voxshap/cli.hpp"

int main(int argc, char** argv) {
  return voxshap::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
