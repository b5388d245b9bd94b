#include "commands.hpp"

int main(int argc, char** argv) { return sftm::cli::run(argc, argv); }
