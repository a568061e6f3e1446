#include "quadtensor/cli.hpp"

int main(int argc, char** argv) { return quadtensor::cli_main(argc, argv); }
