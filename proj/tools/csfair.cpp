#include "csfair/cli.hpp"

int main(int argc, char** argv) { return csfair::cli::run(argc, argv); }
