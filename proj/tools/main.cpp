#include <iostream>
#include <string>
#include <vector>

#include "rinkkp/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return rinkkp::cli_run(args, std::cout, std::cerr);
}
