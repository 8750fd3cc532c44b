#include "director/cli.hpp"

int main(int argc, char** argv) {
    return director::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
