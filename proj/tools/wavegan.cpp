#include "wavegan/cli.hpp"

int main(int argc, char** argv) { return wavegan::run_cli(argc, argv); }
