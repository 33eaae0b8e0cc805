#include <string>
#include <vector>

#include "markovtype/cli.hpp"

int main(int argc, char** argv) {
  return markovtype::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
