#include "geoproto/cli.hpp"

int main(int argc, char** argv) {
  return geoproto::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
