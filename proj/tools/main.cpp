#include <iostream>

#include "onsd/cli.hpp"

int main(int argc, char** argv) { return onsd::run_cli(argc, argv, std::cout, std::cerr); }
