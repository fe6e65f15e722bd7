#include <iostream>

#include "mfl/cli.hpp"

int main(int argc, char** argv) { return mfl::cli_main(argc, argv, std::cout, std::cerr); }
