#include <iostream>

#include "nextdit/cli/run.hpp"

int main(int argc, char** argv) { return nextdit::cli::run(argc, argv, std::cout, std::cerr); }
