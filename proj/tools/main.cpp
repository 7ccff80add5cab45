#include "ndc_cli.hpp"

int main(int argc, char** argv) { return ndc::cli::run_cli(argc, argv); }
