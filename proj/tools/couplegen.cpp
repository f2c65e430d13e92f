#include <iostream>

#include "couplegen/cli.hpp"

int main(int argc, char** argv)
{
    return couplegen::cli::run(argc, argv, std::cout, std::cerr);
}
