#include "stackd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stackd::cli::run(argc, argv, std::cout, std::cerr); }
