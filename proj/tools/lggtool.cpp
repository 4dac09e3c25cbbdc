#include <iostream>

#include "lgg/cli.hpp"

int main(int argc, char** argv) { return lgg::harness::cli_main(argc, argv, std::cout, std::cerr); }
