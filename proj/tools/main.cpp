#include "mmpoe/cli.hpp"

int main(int argc, char** argv) { return mmpoe::run_cli(argc, argv); }
