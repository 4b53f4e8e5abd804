#include "psn/cli.hpp"

int main(int argc, char** argv) { return psn::cli::run(argc, argv); }
