#include "imagine/cli.hpp"

int main(int argc, char** argv) { return imagine::cli::run(argc, argv); }
