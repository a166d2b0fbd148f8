#include <iostream>

#include "coaug/cli.hpp"

int main(int argc, char** argv) { return coaug::cli::run(argc, argv, std::cout, std::cerr); }
