#include "eegalign/cli.hpp"

int main(int argc, char** argv) { return eegalign::run_cli(argc, argv); }
