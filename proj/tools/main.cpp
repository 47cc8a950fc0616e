#include <iostream>

#include "xmae/cli.hpp"

int main(int argc, char** argv) { return xmae::cli::run(argc, argv, std::cout, std::cerr); }
