#include <iostream>

#include "lung/cli.hpp"

int main(int argc, char** argv) { return lung::cli::main(argc, argv, std::cout, std::cerr); }
