#include "metatne/cli.hpp"

int main(int argc, char** argv) { return metatne::run_cli(argc, argv); }
