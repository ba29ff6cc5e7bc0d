#include "vidswap/cli.hpp"

int main(int argc, char** argv) { return vidswap::run_cli(argc, argv); }
