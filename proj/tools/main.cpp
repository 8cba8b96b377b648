#include <iostream>

#include "plainpt/cli.hpp"

int main(int argc, char** argv) { return plainpt::run_cli(argc, argv, std::cout, std::cerr); }
