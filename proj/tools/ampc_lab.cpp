#include "ampc/cli.hpp"

int main(int argc, char** argv) { return ampc::cli::run_cli(argc, argv); }
