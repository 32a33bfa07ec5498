#include <string>
#include <vector>

#include "lorenz/cli.hpp"

int main(int argc, char** argv) {
  return lorenz::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
