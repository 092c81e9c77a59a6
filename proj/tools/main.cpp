#include <iostream>

#include "mvbigan/cli.hpp"

int main(int argc, char** argv) { return mvbigan::run(argc, argv, std::cout, std::cerr); }
