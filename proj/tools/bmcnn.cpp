#include <iostream>
#include <string>
#include <vector>

#include "bmcnn/cli.hpp"

int main(int argc, char** argv) {
  return bmcnn::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
