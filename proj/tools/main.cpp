#include "commands.hpp"

int main(int argc, char** argv) { return dmae::cli::run_cli(argc, argv); }
