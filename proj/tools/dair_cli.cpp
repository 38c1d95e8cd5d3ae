#include "dair/cli.hpp"

int main(int argc, char** argv) { return dair::cli::run(argc, argv); }
