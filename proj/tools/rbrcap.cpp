#include "rbrcap/cli.hpp"

int main(int argc, char** argv) { return rbrcap::cli::run(argc, argv); }
