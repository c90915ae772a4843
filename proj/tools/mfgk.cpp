#include <iostream>

#include "mfgk/cli.hpp"

int main(int argc, char** argv) { return mfgk::cli::run(argc, argv, std::cout, std::cerr); }
