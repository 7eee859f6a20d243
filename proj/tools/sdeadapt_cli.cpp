#include "sdeadapt/cli.hpp"

int main(int argc, char** argv) { return sdeadapt::cli::parse_and_dispatch(argc, argv); }
