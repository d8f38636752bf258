#include "robcv/cli.hpp"

int main(int argc, char** argv) { return robcv::cli::run(argc, argv); }
