#include <iostream>

#include "psx/cli/app.hpp"

int main(int argc, char** argv) { return psx::cli::run(argc, argv, std::cin, std::cout, std::cerr); }
