#include "fedbayes/cli.hpp"

int main(int argc, char** argv) { return fedbayes::cli::run_cli(argc, argv); }
