#include "cli_app.hpp"

int main(int argc, char** argv) { return cfdx::cli::run_cli(argc, argv); }
