#include "demlab/cli.hpp"

int main(int argc, char** argv) { return demlab::cli::run(argc, argv); }
