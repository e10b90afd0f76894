#include <iostream>

#include "cbctseg/cli.hpp"

int main(int argc, char** argv) { return cbctseg::cli::run(argc, argv, std::cout, std::cerr); }
