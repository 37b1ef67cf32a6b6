#include "sectorhash/cli.hpp"

int main(int argc, char** argv) { return sectorhash::cli::run(argc, argv); }
