#include "emph/cli.hpp"

int main(int argc, char** argv) { return emph::cli::dispatch(argc, argv); }
