#include "sed/cli.hpp"

int main(int argc, char** argv) { return sed::cli::run_cli(argc, argv); }
