#include <iostream>

#include "npudeploy/cli.hpp"

int main(int argc, char** argv) { return npu::cli::run_cli(argc, argv, std::cout, std::cerr); }
