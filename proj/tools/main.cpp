#include "fairstream/cli.hpp"

int main(int argc, char** argv) { return fairstream::cli::run(argc, argv); }
