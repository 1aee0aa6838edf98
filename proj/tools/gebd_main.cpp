#include <string>
#include <vector>

#include "gebd/cli.hpp"

int main(int argc, char** argv) {
    return gebd::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
