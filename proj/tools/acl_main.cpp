#include <string>
#include <vector>

#include "acl/cli.hpp"

int main(int argc, char** argv) {
  return acl::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
