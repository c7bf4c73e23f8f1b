#include "scan/cli.hpp"

int main(int argc, char** argv) { return scan::cli::run(argc, argv); }
