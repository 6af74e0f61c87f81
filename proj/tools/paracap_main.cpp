#include <iostream>
#include <string>
#include <vector>

#include "paracap/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return paracap::cli::run(args, std::cout, std::cerr);
}
