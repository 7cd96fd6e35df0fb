#include "neurotopo_cli/cli.hpp"

int main(int argc, char** argv) { return ntopo::cli::run(argc, argv); }
