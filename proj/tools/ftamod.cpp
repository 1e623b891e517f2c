#include "ftamod/cli.hpp"

int main(int argc, char** argv) { return ftamod::cli::dispatch(argc, argv); }
