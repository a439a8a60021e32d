#include <vector>

#include "qfuse_cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return qfuse::cli::dispatch(args);
}
