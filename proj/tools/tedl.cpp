#include "tedl/cli.hpp"

int main(int argc, char** argv) { return tedl::cli::run(argc, argv); }
