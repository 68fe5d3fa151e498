#include "medbert/cli.hpp"

int main(int argc, char** argv) { return medbert::cli::run(argc, argv); }
