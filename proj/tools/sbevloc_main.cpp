#include <string>
#include <vector>

#include "sbevloc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sbevloc::cli::run(std::move(args));
}
