#include "smoothdtw/cli.hpp"

int main(int argc, char** argv) { return smoothdtw::run_cli(argc, argv); }
