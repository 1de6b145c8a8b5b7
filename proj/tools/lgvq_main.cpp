#include <iostream>

#include "lgvq/cli.hpp"

int main(int argc, char** argv) {
    return lgvq::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
