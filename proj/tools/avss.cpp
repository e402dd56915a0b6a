// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <iostream>
#include <string>
#include <vector>

#include "avss/cli/commands.hpp"

int main(int argc, char** argv) {
  return avss::cli::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
