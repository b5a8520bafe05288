#include <string>
#include <vector>

#include "stackcast/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return stackcast::cli::run(args);
}
