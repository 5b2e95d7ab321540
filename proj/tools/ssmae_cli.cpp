#include "ssmae/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ssmae::run_cli(argc, argv, std::cout, std::cerr); }
