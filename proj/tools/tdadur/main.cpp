#include <iostream>

#include "tdadur/cli.hpp"

int main(int argc, char** argv) { return tdadur::cli::run(argc, argv, std::cout, std::cerr); }
