#include "cli.hpp"

int main(int argc, char** argv) {
  return floodcast::cli::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
