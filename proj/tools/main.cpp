#include "cli.hpp"

int main(int argc, char** argv) { return omt::cli::dispatch(argc, argv); }
