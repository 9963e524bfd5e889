#include <iostream>

#include "mmmna/harness/cli.hpp"

int main(int argc, char** argv) { return mmmna::harness::run_cli(argc, argv, std::cout, std::cerr); }
