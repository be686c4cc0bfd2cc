#include "specharness/cli.hpp"

int main(int argc, char** argv) { return specharness::cli::main(argc, argv); }
