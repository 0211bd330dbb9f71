#include "qprobe/cli.hpp"

int main(int argc, char** argv) { return qprobe::cli::run(argc, argv); }
