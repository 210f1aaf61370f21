#include <iostream>

#include "gtselect/cli.hpp"

int main(int argc, char** argv) { return gtselect::cli_main(argc, argv, std::cout, std::cerr); }
