#include "opg_cli/commands.hpp"

int main(int argc, char** argv) { return opg::cli::run(argc, argv); }
