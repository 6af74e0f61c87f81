// Regenerates the bundled toy fixture: make_fixture <dir>
#include <iostream>

#include "paracap/errors.hpp"
#include "paracap/fixture.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixture <output-dir>\n";
        return 1;
    }
    try {
        paracap::fixture::write_toy_fixture(argv[1]);
    } catch (const paracap::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cout << "wrote toy fixture to " << argv[1] << "\n";
    return 0;
}
