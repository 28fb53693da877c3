#include <iostream>

#include "plrl/cli.h"

int main(int argc, char** argv) { return plrl::run_cli(argc, argv, std::cout, std::cerr); }
