#include "commands.hpp"

int main(int argc, char** argv) { return threegroups::cli::run(argc, argv); }
