#include "flhom/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return flhom::cli::run_cli(argc, argv, std::cout, std::cerr);
}
