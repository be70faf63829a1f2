#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "sqt/allocator.hpp"

int main(int argc, char** argv) {
    sqt::tune_allocator();
    const std::vector<std::string> args(argv + 1, argv + argc);
    return sqt::cli::run(args, std::cout, std::cerr);
}
