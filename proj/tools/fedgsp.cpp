#include "fedgsp/cli.hpp"

int main(int argc, char** argv) { return fedgsp::cli::main(argc, argv); }
