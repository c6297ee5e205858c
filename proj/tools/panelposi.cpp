#include "panelposi/cli.hpp"

int main(int argc, char** argv) { return panelposi::run_cli(argc, argv); }
