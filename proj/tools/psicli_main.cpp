#include <psi/cli/run.hpp>

int main(int argc, char** argv) { return psi::cli::run_cli(argc, argv); }
