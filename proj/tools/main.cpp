#include "avh/cli.hpp"

int main(int argc, char** argv) { return avh::run_cli(argc, argv); }
