#include "carflow/cli.hpp"

int main(int argc, char** argv) { return carflow::cli::run_cli(argc, argv); }
