#include "kprel/cli.h"

int main(int argc, char** argv) { return kprel::run_cli(argc, argv); }
