#include <string>
#include <vector>

#include "cdma/cli.hpp"

int main(int argc, char** argv) {
  return cdma::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
