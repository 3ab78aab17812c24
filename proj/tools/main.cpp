#include "cli.hpp"

int main(int argc, char** argv) { return gridgfv::cli::dispatch(argc, argv); }
