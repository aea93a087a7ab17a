#include "setest/cli.hpp"

int main(int argc, char** argv) { return setest::cli::cli_dispatch(argc, argv); }
