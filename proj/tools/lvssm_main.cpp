#include "lvssm/cli.hpp"

int main(int argc, char** argv) { return lvssm::run_cli(argc, argv); }
