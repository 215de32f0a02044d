#include "advrec/cli.hpp"

int main(int argc, char** argv) { return advrec::run_cli(argc, argv); }
