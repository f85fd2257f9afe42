#include "seqtag/cli.hpp"

int main(int argc, char** argv) {
  return seqtag::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
