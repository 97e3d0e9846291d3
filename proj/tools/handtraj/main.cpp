#include "handtraj/cli/commands.hpp"

int main(int argc, char** argv) { return handtraj::cli::run(argc, argv); }
