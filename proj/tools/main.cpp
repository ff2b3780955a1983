#include "flowtune/cli.hpp"

int main(int argc, char** argv) { return flowtune::cli_main(argc, argv); }
