#include "snrf/cli.hpp"

int main(int argc, char** argv) { return snrf::run_cli(argc, argv); }
