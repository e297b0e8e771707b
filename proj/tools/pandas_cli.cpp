#include "pandas/cli.hpp"

int main(int argc, char** argv) { return pandas::cli::run(argc, argv); }
