#include <iostream>

#include "cafl/cli.hpp"

int main(int argc, char** argv) { return cafl::cli::cli_main(argc, argv, std::cout, std::cerr); }
