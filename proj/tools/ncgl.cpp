#include "ncgl/cli.hpp"

int main(int argc, char** argv) { return ncgl::run_cli(argc, argv); }
