#include "pabnet/cli.hpp"

int main(int argc, char** argv) { return pabnet::run_cli(argc, argv); }
