#include "lattice_bsde/cli.hpp"

int main(int argc, char** argv) { return lattice_bsde::run(argc, argv); }
