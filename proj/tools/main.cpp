#include <string>
#include <vector>

#include "nvnm/cli.hpp"

int main(int argc, char** argv) {
  return nvnm::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
