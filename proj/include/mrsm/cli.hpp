#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mrsm::cli {

// Runs one subcommand. Returns 0 on success, 2 on a usage error (usage text
// on `err`) and 1 on any other failure (diagnostic on `err`).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace mrsm::cli
