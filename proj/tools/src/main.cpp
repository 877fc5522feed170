#include <iostream>

#include "pen_cli/cli.hpp"

int main(int argc, char** argv)
{
    return pen::cli::run(argc, argv, std::cout, std::cerr);
}
