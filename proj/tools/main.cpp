#include <iostream>

#include "hypoloop/cli.hpp"

int main(int argc, char** argv) { return hypoloop::run_cli(argc, argv, std::cout, std::cerr); }
