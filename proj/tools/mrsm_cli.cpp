#include "mrsm/cli.hpp"

int main(int argc, char** argv) { return mrsm::cli::main(argc, argv); }
