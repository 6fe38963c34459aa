#include <iostream>

#include "dlflow/cli/app.hpp"

int main(int argc, char** argv) { return dlflow::cli::run_app(argc, argv, std::cout, std::cerr); }
